#include "lexsimp/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "lexsimp/corpus.hpp"
#include "lexsimp/errors.hpp"

namespace lexsimp {

namespace {

struct Counts {
  std::size_t correct = 0, predicted = 0, gold = 0;
};

MetricReport aggregate(const std::vector<Counts>& counts, bool micro) {
  MetricReport r;
  r.items = counts.size();
  Counts total;
  for (const auto& c : counts) {
    r.per_item.push_back(prf_from_counts(c.correct, c.predicted, c.gold));
    total.correct += c.correct;
    total.predicted += c.predicted;
    total.gold += c.gold;
  }
  if (counts.empty()) return r;
  if (micro) {
    r.score = prf_from_counts(total.correct, total.predicted, total.gold);
    return r;
  }
  for (const auto& p : r.per_item) {
    r.score.precision += p.precision;
    r.score.recall += p.recall;
    r.score.f1 += p.f1;
  }
  const auto n = static_cast<double>(counts.size());
  r.score.precision /= n;
  r.score.recall /= n;
  r.score.f1 /= n;
  return r;
}

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a) + " predictions for " + std::to_string(b) +
                     " gold items");
  }
}

std::unordered_set<std::string> lowered(const std::vector<std::string>& words) {
  std::unordered_set<std::string> out;
  for (const auto& w : words) out.insert(to_lower(w));
  return out;
}

}  // namespace

Prf prf_from_counts(std::size_t correct, std::size_t predicted, std::size_t gold) {
  if (predicted == 0 && gold == 0) return {1.0, 1.0, 1.0};
  Prf p;
  p.precision = predicted ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  p.recall = gold ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  const double denom = p.precision + p.recall;
  p.f1 = denom > 0.0 ? 2.0 * p.precision * p.recall / denom : 0.0;
  return p;
}

MetricReport cwi_metrics(const std::vector<PositionSet>& preds, const std::vector<PositionSet>& gold, bool micro) {
  check_aligned(preds.size(), gold.size(), "cwi_metrics");
  std::vector<Counts> counts;
  counts.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Counts c{0, preds[i].size(), gold[i].size()};
    for (auto p : preds[i]) c.correct += gold[i].count(p);
    counts.push_back(c);
  }
  return aggregate(counts, micro);
}

MetricReport sg_metrics(const std::vector<std::vector<std::string>>& preds,
                        const std::vector<std::vector<std::string>>& gold, bool micro) {
  check_aligned(preds.size(), gold.size(), "sg_metrics");
  std::vector<Counts> counts;
  counts.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto cands = lowered(preds[i]);
    const auto golds = lowered(gold[i]);
    Counts c{0, cands.size(), golds.size()};
    for (const auto& w : cands) c.correct += golds.count(w);
    // An instance without candidates scores zero even against empty gold.
    if (cands.empty()) c.gold = std::max<std::size_t>(c.gold, 1);
    counts.push_back(c);
  }
  return aggregate(counts, micro);
}

MetricReport ls_metrics(const std::vector<LsPrediction>& preds, const std::vector<LsGold>& gold, bool micro) {
  check_aligned(preds.size(), gold.size(), "ls_metrics");
  std::vector<Counts> counts;
  counts.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    Counts c{0, preds[i].size(), gold[i].size()};
    for (const auto& [pos, word] : preds[i]) {
      auto it = gold[i].find(pos);
      if (it == gold[i].end()) continue;
      const auto subs = lowered(it->second);
      c.correct += subs.count(to_lower(word));
    }
    counts.push_back(c);
  }
  return aggregate(counts, micro);
}

void ReportTable::add(std::string system, std::string dataset, std::string task, Prf score) {
  entries.push_back({std::move(system), std::move(dataset), std::move(task), score});
}

namespace {

template <typename F>
std::vector<std::string> ordered_unique(const std::vector<ReportEntry>& entries, F key) {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    const std::string& k = key(e);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

std::string task_title(const std::string& task) {
  if (task == "cwi") return "Complex Word Identification";
  if (task == "sg") return "Substitute Generation";
  if (task == "ls") return "Lexical Simplification";
  return task;
}

const ReportEntry* find_entry(const ReportTable& t, const std::string& task, const std::string& system,
                              const std::string& dataset) {
  for (const auto& e : t.entries) {
    if (e.task == task && e.system == system && e.dataset == dataset) return &e;
  }
  return nullptr;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string format_report(const ReportTable& table) {
  const auto tasks = ordered_unique(table.entries, [](const ReportEntry& e) -> const std::string& { return e.task; });
  const auto datasets =
      ordered_unique(table.entries, [](const ReportEntry& e) -> const std::string& { return e.dataset; });
  std::size_t name_width = 7;
  for (const auto& e : table.entries) name_width = std::max(name_width, e.system.size());

  std::ostringstream out;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };
  for (const auto& task : tasks) {
    const auto systems = ordered_unique(table.entries, [](const ReportEntry& e) -> const std::string& { return e.system; });
    out << "== " << task_title(task) << " ==\n";
    out << std::string(name_width, ' ');
    for (const auto& d : datasets) out << " | " << pad(d, 29);
    out << "\n" << std::string(name_width, ' ');
    for (std::size_t i = 0; i < datasets.size(); ++i) out << " | " << pad("Precision", 9) << pad("Recall", 10) << pad("F1", 10);
    out << "\n";
    // Best per column, over systems that report this task.
    std::vector<double> best(datasets.size() * 3, -1.0);
    for (const auto& s : systems) {
      for (std::size_t d = 0; d < datasets.size(); ++d) {
        if (const auto* e = find_entry(table, task, s, datasets[d])) {
          best[d * 3] = std::max(best[d * 3], e->score.precision);
          best[d * 3 + 1] = std::max(best[d * 3 + 1], e->score.recall);
          best[d * 3 + 2] = std::max(best[d * 3 + 2], e->score.f1);
        }
      }
    }
    for (const auto& s : systems) {
      bool any = false;
      for (const auto& d : datasets) any = any || find_entry(table, task, s, d);
      if (!any) continue;
      out << s << std::string(name_width - s.size(), ' ');
      for (std::size_t d = 0; d < datasets.size(); ++d) {
        const auto* e = find_entry(table, task, s, datasets[d]);
        out << " | ";
        const double vals[3] = {e ? e->score.precision : 0, e ? e->score.recall : 0, e ? e->score.f1 : 0};
        const std::size_t widths[3] = {9, 10, 10};
        for (int k = 0; k < 3; ++k) {
          std::string cell = e ? fmt3(vals[k]) : "-";
          if (e && fmt3(vals[k]) == fmt3(best[d * 3 + k])) cell += "*";
          out << pad(cell, widths[k]);
        }
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

nlohmann::json report_json(const ReportTable& table) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : table.entries) {
    j.push_back({{"system", e.system},
                 {"dataset", e.dataset},
                 {"task", e.task},
                 {"precision", e.score.precision},
                 {"recall", e.score.recall},
                 {"f1", e.score.f1}});
  }
  return j;
}

}  // namespace lexsimp
