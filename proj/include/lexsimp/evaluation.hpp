#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace lexsimp {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricReport {
  Prf score;  // macro average unless micro was requested
  std::vector<Prf> per_item;
  std::size_t items = 0;
};

// Scores for one item from raw counts. Empty prediction against empty gold
// scores 1/1/1; any other empty side scores 0 on that side.
Prf prf_from_counts(std::size_t correct, std::size_t predicted, std::size_t gold);

using PositionSet = std::set<std::size_t>;

MetricReport cwi_metrics(const std::vector<PositionSet>& preds, const std::vector<PositionSet>& gold,
                         bool micro = false);

// Ranked candidates per instance versus the gold substitution list.
MetricReport sg_metrics(const std::vector<std::vector<std::string>>& preds,
                        const std::vector<std::vector<std::string>>& gold, bool micro = false);

using LsPrediction = std::vector<std::pair<std::size_t, std::string>>;   // (position, top-1 word)
using LsGold = std::map<std::size_t, std::vector<std::string>>;         // position -> substitutions

MetricReport ls_metrics(const std::vector<LsPrediction>& preds, const std::vector<LsGold>& gold, bool micro = false);

// systems x datasets x tasks. Task keys are "cwi", "sg", "ls".
struct ReportEntry {
  std::string system;
  std::string dataset;
  std::string task;
  Prf score;
};

struct ReportTable {
  std::vector<ReportEntry> entries;
  void add(std::string system, std::string dataset, std::string task, Prf score);
};

// Aligned text table: one block per task, rows are systems in insertion order,
// columns (Precision, Recall, F1) per dataset. The best value per column is
// marked with '*'.
std::string format_report(const ReportTable& table);
nlohmann::json report_json(const ReportTable& table);

}  // namespace lexsimp
