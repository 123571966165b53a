#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

// Exhaustive-counting reimplementation of the CWI/SG/LS metrics. Shares no
// code with the library; tests compare the two paths for exact equality.
namespace oracle {

struct Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

enum class Task { Cwi, Sg, Ls };

struct Instance {
  // Cwi: positions. Sg: words. Ls: (position, word) pairs.
  std::set<std::size_t> pred_positions;
  std::set<std::size_t> gold_positions;
  std::vector<std::string> pred_words;
  std::vector<std::string> gold_words;
  std::vector<std::pair<std::size_t, std::string>> pred_pairs;
  std::map<std::size_t, std::vector<std::string>> gold_pairs;
};

// Macro average over instances, or pooled counts when micro is set.
Score brute_force_oracle(const std::vector<Instance>& instances, Task task, bool micro = false);

}  // namespace oracle
