#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexsimp/pipeline.hpp"

using namespace lexsimp;

// Measurements on the default toy world with trained models. Slow: the
// discriminator, three editors and the filler are trained once per process.

namespace {

const ToyStage& stage() {
  static const ToyStage st = prepare_toy_stage(RunConfig{});
  return st;
}

const EditorRun& full_editor() {
  static const EditorRun run = run_toy_editor(stage(), stage().config.weights);
  return run;
}

const FillStage& filler() {
  static const FillStage fs = run_toy_filler(stage());
  return fs;
}

bool is_planted(const GoldSentence& g, std::size_t i) {
  for (auto p : g.positions) {
    if (p == i) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("discriminator: accurate within ten epochs and confident on held-out complex sentences") {
  const auto& st = stage();
  CHECK(st.config.disc_train.epochs <= 10);
  CHECK(st.disc_result.dev_accuracy >= 0.95);
  CHECK(st.confident_complex >= 0.95);
}

TEST_CASE("discriminator: zeroing the planted word moves p_complex toward one half") {
  const auto& st = stage();
  const auto held = group_by_sentence(st.world.annotated);
  std::size_t closer = 0;
  for (const auto& g : held) {
    std::vector<double> keep(g.sentence.size(), 1.0);
    for (auto p : g.positions) keep[p] = 0.0;
    const double before = st.disc->classify(g.sentence).p_complex;
    const double after = st.disc->classify_embedded(st.disc->encoder().embed(g.sentence, &keep)).p_complex;
    closer += std::abs(after - 0.5) < std::abs(before - 0.5);
  }
  const double rate = static_cast<double>(closer) / static_cast<double>(held.size());
  MESSAGE("closer to 0.5 after masking: " << rate);
  CHECK(rate >= 0.8);
}

TEST_CASE("discriminator: attention favours planted words") {
  const auto& st = stage();
  double planted = 0.0, other = 0.0;
  std::size_t np = 0, no = 0;
  for (const auto& g : group_by_sentence(st.world.annotated)) {
    const auto att = st.disc->attention_scores(g.sentence);
    for (std::size_t i = 0; i < att.size(); ++i) {
      if (is_planted(g, i)) {
        planted += att[i];
        ++np;
      } else {
        other += att[i];
        ++no;
      }
    }
  }
  MESSAGE("mean attention planted " << planted / np << ", other " << other / no);
  CHECK(planted / static_cast<double>(np) > other / static_cast<double>(no));
}

TEST_CASE("editor: planted words are dropped and the rest kept") {
  const auto& ed = *full_editor().editor;
  double planted = 0.0, other = 0.0;
  std::size_t np = 0, no = 0;
  for (const auto& g : group_by_sentence(stage().world.annotated)) {
    const auto p = ed.predict_probs(g.sentence);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (is_planted(g, i)) {
        planted += p.p_keep[i];
        ++np;
      } else {
        other += p.p_keep[i];
        ++no;
      }
    }
  }
  MESSAGE("mean p_keep planted " << planted / np << ", other " << other / no);
  CHECK(planted / static_cast<double>(np) < 0.5);
  CHECK(other / static_cast<double>(no) > 0.5);
  CHECK(full_editor().train.discriminator_checksum == stage().checksum_before);
}

TEST_CASE("editor: removing the LLM loss lowers held-out F1") {
  const auto no_llm = run_toy_editor(stage(), ablated_weights(stage().config.weights, "llm"));
  MESSAGE("full " << full_editor().heldout.score.f1 << ", lambda3=0 " << no_llm.heldout.score.f1);
  CHECK(no_llm.heldout.score.f1 < full_editor().heldout.score.f1);
}

TEST_CASE("editor: pure distillation tracks the oracle's own F1" * doctest::may_fail()) {
  LossWeights w = stage().config.weights;
  w.lambda1 = 0.0;
  w.lambda2 = 0.0;
  w.lambda3 = 1.0;
  const auto run = run_toy_editor(stage(), w);
  MESSAGE("distilled " << run.heldout.score.f1 << ", oracle " << stage().oracle_f1);
  CHECK(std::abs(run.heldout.score.f1 - stage().oracle_f1) <= 0.05);
}

TEST_CASE("filler: the planted synonym is among the top ten") {
  const auto& fm = *filler().filler;
  std::size_t hits = 0, total = 0;
  bool saw_utilize = false;
  for (const auto& inst : stage().world.annotated) {
    auto edits = EditSequence::all_keep(inst.sentence.size());
    edits.labels[inst.complex_index] = Edit::Mask;
    const auto r = fill_edits(inst.sentence, edits, fm, 10);
    bool hit = false;
    for (const auto& [w, s] : r.candidates.at(0).candidates) hit = hit || w == inst.gold_substitutions.front();
    hits += hit;
    ++total;
    if (inst.complex_word() == "utilize") {
      saw_utilize = true;
      CHECK(hit);
    }
  }
  MESSAGE("synonym in top-10: " << hits << " of " << total);
  CHECK(saw_utilize);
  CHECK(static_cast<double>(hits) / static_cast<double>(total) >= 0.7);
}

TEST_CASE("pipeline: final sentences carry the planted synonym") {
  const auto scores = score_pipeline(*full_editor().editor, *filler().filler, stage().world.annotated, 10,
                                     stage().config.schedule.threshold);
  MESSAGE("recovery " << scores.synonym_recovery);
  CHECK(scores.synonym_recovery >= 0.7);
}
