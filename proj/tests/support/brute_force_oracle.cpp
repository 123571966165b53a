#include "brute_force_oracle.hpp"

#include <cctype>

namespace oracle {

namespace {

std::string lower(const std::string& w) {
  std::string out;
  for (char c : w) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool listed(const std::vector<std::string>& words, const std::string& w) {
  for (const auto& x : words) {
    if (lower(x) == lower(w)) return true;
  }
  return false;
}

// Distinct lowercased words, first occurrence kept.
std::vector<std::string> distinct(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (!listed(out, w)) out.push_back(lower(w));
  }
  return out;
}

struct Tally {
  double correct = 0, predicted = 0, gold = 0;
};

Score score_of(const Tally& t) {
  Score s;
  if (t.predicted == 0 && t.gold == 0) return {1.0, 1.0, 1.0};
  if (t.predicted > 0) s.precision = t.correct / t.predicted;
  if (t.gold > 0) s.recall = t.correct / t.gold;
  if (s.precision + s.recall > 0) s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

Tally tally(const Instance& in, Task task) {
  Tally t;
  switch (task) {
    case Task::Cwi: {
      std::size_t top = 0;
      for (auto p : in.pred_positions) top = p + 1 > top ? p + 1 : top;
      for (auto p : in.gold_positions) top = p + 1 > top ? p + 1 : top;
      for (std::size_t i = 0; i < top; ++i) {
        const bool pr = in.pred_positions.count(i) > 0;
        const bool go = in.gold_positions.count(i) > 0;
        if (pr) t.predicted += 1;
        if (go) t.gold += 1;
        if (pr && go) t.correct += 1;
      }
      break;
    }
    case Task::Sg: {
      const auto cands = distinct(in.pred_words);
      const auto golds = distinct(in.gold_words);
      t.predicted = static_cast<double>(cands.size());
      t.gold = static_cast<double>(golds.size());
      for (const auto& c : cands) {
        for (const auto& g : golds) {
          if (c == g) t.correct += 1;
        }
      }
      // No candidates scores zero, even against an empty gold list.
      if (cands.empty() && t.gold == 0) t.gold = 1;
      break;
    }
    case Task::Ls: {
      t.predicted = static_cast<double>(in.pred_pairs.size());
      t.gold = static_cast<double>(in.gold_pairs.size());
      for (const auto& [pos, word] : in.pred_pairs) {
        for (const auto& [gpos, subs] : in.gold_pairs) {
          if (gpos == pos && listed(subs, word)) t.correct += 1;
        }
      }
      break;
    }
  }
  return t;
}

}  // namespace

Score brute_force_oracle(const std::vector<Instance>& instances, Task task, bool micro) {
  Score out;
  if (instances.empty()) return out;
  if (micro) {
    Tally all;
    for (const auto& in : instances) {
      const Tally t = tally(in, task);
      all.correct += t.correct;
      all.predicted += t.predicted;
      all.gold += t.gold;
    }
    return score_of(all);
  }
  for (const auto& in : instances) {
    const Score s = score_of(tally(in, task));
    out.precision += s.precision;
    out.recall += s.recall;
    out.f1 += s.f1;
  }
  const double n = static_cast<double>(instances.size());
  out.precision /= n;
  out.recall /= n;
  out.f1 /= n;
  return out;
}

}  // namespace oracle
