// Acceptance driver: one PASS/FAIL line per primary criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lexsimp/adv_training.hpp"
#include "lexsimp/checkpoint.hpp"
#include "lexsimp/evaluation.hpp"
#include "lexsimp/pipeline.hpp"
#include "support/brute_force_oracle.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string num(double v, int digits = 3) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string sci(double v) {
  std::ostringstream out;
  out << std::scientific << std::setprecision(2) << v;
  return out.str();
}

CriterionResult loss_units() {
  const auto start = Clock::now();
  const double c1 = confusion_loss(0.9, 0.5), c2 = confusion_loss(0.5, 0.5), c3 = confusion_loss(1.0, 0.5);
  Eigen::RowVectorXd e1(3), e2(3);
  e1 << 1, 0, 0;
  e2 << 0, 1, 0;
  const double i0 = invariance_loss(e1, e1), i1 = invariance_loss(e1, e2), i2 = invariance_loss(e1, -e1);
  const auto l = llm_loss(EditProbs{{0.5, 0.5, 0.5}}, parse_edit_sequence("K M K"), {true, true, true});
  const double secs = seconds_since(start);
  const bool ok = std::abs(c1 - 0.16) < 1e-12 && c2 == 0.0 && std::abs(c3 - 0.25) < 1e-12 && i0 == 0.0 &&
                  std::abs(i1 - 1.0) < 1e-12 && std::abs(i2 - 2.0) < 1e-12 &&
                  std::abs(l.value - std::log(2.0)) <= 1e-9 && secs < 1.0;
  return {"loss units", ok,
          "conf " + num(c1, 4) + "/" + num(c2, 4) + "/" + num(c3, 4) + ", inv " + num(i0, 4) + "/" + num(i1, 4) + "/" +
              num(i2, 4) + ", llm - ln2 = " + sci(l.value - std::log(2.0)) + ", " + num(secs, 3) + " s (< 1)"};
}

PseudoLabels random_labels(Rng& rng, std::size_t n) {
  PseudoLabels pl;
  pl.labels = EditSequence::all_keep(n);
  pl.align_mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.bernoulli(0.3)) pl.labels.labels[i] = Edit::Mask;
    pl.align_mask[i] = rng.bernoulli(0.7);
  }
  pl.align_mask[rng.below(n)] = true;
  pl.usable = true;
  return pl;
}

double term_value(const EditPredictor& editor, const Discriminator& disc, const SentenceTokens& s,
                  const PseudoLabels& pl, const Eigen::RowVectorXd& h_orig, int term, nn::GradBuffer* grads) {
  nn::Tape tape(grads);
  auto t = editor_losses(tape, editor, disc, s, pl, h_orig, LossWeights{}, false, nullptr);
  nn::Var v = term == 0 ? t.conf : term == 1 ? t.inv : t.llm;
  if (grads) tape.backward(v);
  return tape.scalar(v);
}

// Norm-wise relative error over every edit-head entry.
double head_gradient_error(EditPredictor& editor, const Discriminator& disc, const SentenceTokens& s,
                           const PseudoLabels& pl, const Eigen::RowVectorXd& h_orig, int term) {
  constexpr double h = 1e-3;
  nn::GradBuffer grads;
  term_value(editor, disc, s, pl, h_orig, term, &grads);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (nn::Parameter* p : editor.head_parameters()) {
    const nn::Matrix* g = grads.find(p);
    if (!g) return INFINITY;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = term_value(editor, disc, s, pl, h_orig, term, nullptr);
      p->value.data()[i] = saved - h;
      const double down = term_value(editor, disc, s, pl, h_orig, term, nullptr);
      p->value.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = g->data()[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max(std::sqrt(std::max(a2, n2)), 1e-300);
}

CriterionResult gradient_checks() {
  const auto start = Clock::now();
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = 500 + static_cast<std::uint64_t>(trial);
    EditPredictor editor(testing::tiny_encoder(seed), testing::pool_vocabulary());
    const Discriminator disc(testing::tiny_encoder(seed + 1000), testing::pool_vocabulary());
    const auto s = testing::random_sentence(rng, 2 + rng.below(8));
    const auto pl = random_labels(rng, s.size());
    const auto h_orig = reference_representation(disc, s);
    for (int term = 0; term < 3; ++term) worst = std::max(worst, head_gradient_error(editor, disc, s, pl, h_orig, term));
  }
  const double secs = seconds_since(start);
  return {"gradient checks", worst < 1e-4 && secs < 30.0,
          "worst relative error " + sci(worst) + " over 20 instances x 3 losses (< 1e-4), " + num(secs, 2) +
              " s (< 30)"};
}

std::set<std::size_t> random_positions(Rng& rng, std::size_t len) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < len; ++i) {
    if (rng.bernoulli(0.3)) out.insert(i);
  }
  return out;
}

std::vector<std::string> random_words(Rng& rng, std::size_t max) {
  static const std::vector<std::string> words = {"moved", "redirected", "Moved", "sent", "turned", "the", "led"};
  std::vector<std::string> out;
  const std::size_t n = rng.below(max + 1);
  for (std::size_t i = 0; i < n; ++i) out.push_back(words[rng.below(words.size())]);
  return out;
}

bool same(const Prf& a, const oracle::Score& b) {
  return a.precision == b.precision && a.recall == b.recall && a.f1 == b.f1;
}

CriterionResult metric_oracle() {
  const auto start = Clock::now();
  Rng rng(2024);
  int agree = 0, total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<PositionSet> cp, cg;
    std::vector<std::vector<std::string>> sp, sg;
    std::vector<LsPrediction> lp;
    std::vector<LsGold> lg;
    std::vector<oracle::Instance> ci, si, li;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t len = 1 + rng.below(10);
      oracle::Instance c, s, l;
      c.pred_positions = random_positions(rng, len);
      c.gold_positions = random_positions(rng, len);
      s.pred_words = random_words(rng, 10);
      s.gold_words = random_words(rng, 5);
      for (auto pos : random_positions(rng, len)) l.gold_pairs[pos] = random_words(rng, 4);
      for (auto pos : random_positions(rng, len)) {
        const auto w = random_words(rng, 1);
        l.pred_pairs.emplace_back(pos, w.empty() ? "sent" : w.front());
      }
      cp.push_back(c.pred_positions);
      cg.push_back(c.gold_positions);
      sp.push_back(s.pred_words);
      sg.push_back(s.gold_words);
      lp.push_back(l.pred_pairs);
      lg.push_back(l.gold_pairs);
      ci.push_back(c);
      si.push_back(s);
      li.push_back(l);
    }
    agree += same(cwi_metrics(cp, cg).score, oracle::brute_force_oracle(ci, oracle::Task::Cwi));
    agree += same(sg_metrics(sp, sg).score, oracle::brute_force_oracle(si, oracle::Task::Sg));
    agree += same(ls_metrics(lp, lg).score, oracle::brute_force_oracle(li, oracle::Task::Ls));
    total += 3;
  }
  const double secs = seconds_since(start);
  return {"metric oracle equivalence", agree == total && secs < 10.0,
          std::to_string(agree) + "/" + std::to_string(total) + " exact matches (100 per task), " + num(secs, 2) +
              " s (< 10)"};
}

CriterionResult soft_mask_identity() {
  const auto start = Clock::now();
  const Encoder enc(testing::tiny_encoder(1), testing::pool_vocabulary());
  const Discriminator disc(testing::tiny_encoder(77), testing::pool_vocabulary());
  Rng rng(3);
  int identical = 0, zero_inv = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(20));
    const std::vector<double> ones(s.size(), 1.0);
    const nn::Matrix plain = enc.embed(s);
    const nn::Matrix soft = enc.embed(s, &ones);
    identical += plain.rows() == soft.rows() && (plain.array() == soft.array()).all();

    const auto h_orig = reference_representation(disc, s);
    nn::Tape tape;
    nn::Var keep = tape.constant(nn::Matrix::Ones(static_cast<Eigen::Index>(s.size()), 1));
    auto f = disc.forward(tape, disc.encoder().embed(tape, s, keep), false, nullptr);
    zero_inv += tape.scalar(invariance_loss(tape, tape.constant(h_orig), f.sentence_rep)) == 0.0;
  }
  const double secs = seconds_since(start);
  return {"soft-mask identity", identical == 50 && zero_inv == 50 && secs < 5.0,
          std::to_string(identical) + "/50 bit-identical embeddings, " + std::to_string(zero_inv) +
              "/50 zero invariance losses, " + num(secs, 2) + " s (< 5)"};
}

CriterionResult round_trips() {
  const auto start = Clock::now();
  const std::regex grammar(R"(^\[([^,\[\]]+(, [^,\[\]]+)*)?\]$)");
  Rng rng(19);
  int grammar_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testing::distinct_sentence(rng, 1 + rng.below(12));
    std::vector<std::string> subset;
    std::vector<std::size_t> expect;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (rng.bernoulli(0.4)) {
        subset.push_back(s[i]);
        expect.push_back(i);
      }
    }
    rng.shuffle(subset);
    const auto raw = render_word_list(subset);
    const auto pl = parse_response(raw, s);
    std::vector<std::size_t> got;
    for (std::size_t i = 0; i < pl.labels.size(); ++i) {
      if (pl.labels.is_mask(i)) got.push_back(i);
    }
    grammar_ok += std::regex_match(raw, grammar) && pl.usable && got == expect && pl.labels.size() == s.size();
  }

  testing::TempDir dir("acceptance");
  std::vector<AnnotatedInstance> instances;
  for (int i = 0; i < 200; ++i) {
    AnnotatedInstance inst;
    inst.sentence = testing::random_sentence(rng, 1 + rng.below(15));
    inst.complex_index = rng.below(inst.sentence.size());
    const std::size_t n = 1 + rng.below(6);
    for (std::size_t k = 0; k < n; ++k) inst.gold_substitutions.push_back(testing::word_pool()[rng.below(24)]);
    instances.push_back(inst);
  }
  save_annotated(dir / "a.tsv", instances);
  const auto back = load_annotated(dir / "a.tsv");
  int tsv_ok = 0;
  for (std::size_t i = 0; i < std::min(back.size(), instances.size()); ++i) {
    tsv_ok += back[i].sentence.tokens == instances[i].sentence.tokens &&
              back[i].complex_index == instances[i].complex_index &&
              back[i].gold_substitutions == instances[i].gold_substitutions;
  }
  if (back.size() != instances.size()) tsv_ok = 0;

  int edits_ok = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(25));
    EditSequence e = EditSequence::all_keep(s.size());
    for (auto& l : e.labels) l = rng.bernoulli(0.3) ? Edit::Mask : Edit::Keep;
    const auto out = apply_edits(s, e);
    const auto masks = static_cast<std::size_t>(std::count(out.tokens.begin(), out.tokens.end(), kMaskToken));
    edits_ok += out.size() == s.size() && masks == e.mask_count();
  }
  const double secs = seconds_since(start);
  return {"format round-trips", grammar_ok == 200 && tsv_ok == 200 && edits_ok == 500 && secs < 10.0,
          "grammar " + std::to_string(grammar_ok) + "/200, TSV " + std::to_string(tsv_ok) + "/200, apply_edits " +
              std::to_string(edits_ok) + "/500, " + num(secs, 2) + " s (< 10)"};
}

}  // namespace

int main() {
  std::vector<CriterionResult> results;
  results.push_back(loss_units());
  results.push_back(gradient_checks());
  results.push_back(metric_oracle());
  results.push_back(soft_mask_identity());
  std::cerr << format_criteria(results) << std::flush;

  const RunConfig config;
  ToyRunOptions opts;
  opts.progress = &std::cerr;
  const auto summary = run_toy_experiment(config, opts);

  // Seed determinism: the discriminator and the full editor again from scratch.
  const auto stage = prepare_toy_stage(config);
  const auto rerun = run_toy_editor(stage, config.weights);
  const std::string digest = parameter_digest(std::as_const(*rerun.editor).parameters());
  const bool deterministic = stage.checksum_before == summary.checksum_before && digest == summary.editor_digest;

  std::vector<CriterionResult> toy = summary.criteria;
  for (auto& c : toy) {
    if (c.name == "toy adversarial run") {
      c.pass = c.pass && deterministic;
      c.detail += deterministic ? ", rerun identical" : ", rerun differs";
    }
  }
  results.insert(results.begin() + 4, toy.begin(), toy.begin() + 2);
  results.push_back(round_trips());
  results.push_back(toy.back());
  std::cout << format_criteria(results);
  const bool ok = std::all_of(results.begin(), results.end(), [](const CriterionResult& c) { return c.pass; });
  return ok ? 0 : 3;
}
