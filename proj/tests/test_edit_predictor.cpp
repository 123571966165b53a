#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexsimp/edit_predictor.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

const SentenceTokens kWater{{"much", "of", "the", "water", "carried", "by", "these", "streams", "is", "diverted", "."},
                            true};

EditSequence mask_at(std::size_t n, const std::vector<std::size_t>& positions) {
  auto e = EditSequence::all_keep(n);
  for (auto p : positions) e.labels[p] = Edit::Mask;
  return e;
}

}  // namespace

TEST_CASE("decode thresholds keep probabilities and keeps ties") {
  CHECK(to_string(decode(EditProbs{{0.9, 0.2}})) == "K M");
  CHECK(to_string(decode(EditProbs{{0.5, 0.4999}})) == "K M");
  CHECK(to_string(decode(EditProbs{{0.3, 0.3}}, 0.3)) == "K K");
  CHECK(decode(EditProbs{{}}).size() == 0);
}

TEST_CASE("decode clamps punctuation to keep") {
  const SentenceTokens s{{"dog", ",", "ran", "."}, true};
  const auto e = decode(EditProbs{{0.1, 0.1, 0.1, 0.1}}, s);
  CHECK(to_string(e) == "M K M K");
  CHECK_THROWS_AS(decode(EditProbs{{0.1}}, s), ShapeError);
}

TEST_CASE("mask sets are nested across a threshold sweep") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    EditProbs p;
    for (std::size_t i = 0; i < 1 + rng.below(30); ++i) p.p_keep.push_back(rng.uniform());
    EditSequence prev = decode(p, 0.0);
    CHECK(prev.mask_count() == 0);
    for (double t = 0.05; t <= 1.0001; t += 0.05) {
      const auto cur = decode(p, t);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (prev.is_mask(i)) CHECK(cur.is_mask(i));
      }
      CHECK(cur.mask_count() >= prev.mask_count());
      prev = cur;
    }
    // Lowering one probability never unmasks that token.
    const auto i = rng.below(p.size());
    auto lower = p;
    lower.p_keep[i] *= 0.5;
    if (decode(p).is_mask(i)) CHECK(decode(lower).is_mask(i));
  }
}

TEST_CASE("apply_edits on the water example") {
  const auto masked = apply_edits(kWater, mask_at(kWater.size(), {9}));
  CHECK(masked.text() == "much of the water carried by these streams is [MASK] .");
  CHECK(masked.has_cls == kWater.has_cls);
  CHECK(apply_edits(kWater, EditSequence::all_keep(kWater.size())) == kWater);
  const SentenceTokens three{{"a", "b", "c"}, true};
  CHECK(apply_edits(three, mask_at(3, {0, 1, 2})).text() == "[MASK] [MASK] [MASK]");
  CHECK_THROWS_AS(apply_edits(three, EditSequence::all_keep(2)), ShapeError);
}

TEST_CASE("apply_edits masks exactly the M positions") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(25));
    EditSequence e = EditSequence::all_keep(s.size());
    for (auto& l : e.labels) l = rng.bernoulli(0.3) ? Edit::Mask : Edit::Keep;
    const auto out = apply_edits(s, e);
    REQUIRE(out.size() == s.size());
    std::size_t masks = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] == kMaskToken) {
        ++masks;
      } else {
        CHECK(out[i] == s[i]);
      }
    }
    CHECK(masks == e.mask_count());
  }
}

TEST_CASE("edit strings round-trip") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    EditSequence e = EditSequence::all_keep(1 + rng.below(20));
    for (auto& l : e.labels) l = rng.bernoulli(0.5) ? Edit::Mask : Edit::Keep;
    CHECK(parse_edit_sequence(to_string(e)) == e);
  }
  CHECK_THROWS(parse_edit_sequence("K X M"));
}

TEST_CASE("zero head predicts one half everywhere, one entry per word") {
  const EditPredictor ed(testing::tiny_encoder(), testing::pool_vocabulary(), true);
  Rng rng(8);
  for (std::size_t n : {1, 7, 50}) {
    const auto p = ed.predict_probs(testing::random_sentence(rng, n));
    REQUIRE(p.size() == n);
    for (double v : p.p_keep) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("random head gives valid probabilities and log-probabilities") {
  const EditPredictor ed(testing::tiny_encoder(4), testing::pool_vocabulary());
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(12));
    nn::Tape tape;
    const auto f = ed.forward(tape, s, false, nullptr);
    const auto& lp = tape.value(f.log_probs);
    const auto& keep = tape.value(f.keep);
    REQUIRE(lp.rows() == static_cast<Eigen::Index>(s.size()));
    for (Eigen::Index i = 0; i < lp.rows(); ++i) {
      CHECK(std::exp(lp(i, 0)) + std::exp(lp(i, 1)) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(keep(i, 0) == doctest::Approx(std::exp(lp(i, 0))).epsilon(1e-12));
    }
  }
}

TEST_CASE("checkpoint save and load reproduce predictions") {
  testing::TempDir dir("editor");
  const EditPredictor ed(testing::tiny_encoder(11), testing::pool_vocabulary());
  ed.save(dir / "editor.ckpt");
  const auto back = EditPredictor::load(dir / "editor.ckpt");
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = testing::random_sentence(rng, 6);
    CHECK(back.predict_probs(s).p_keep == ed.predict_probs(s).p_keep);
  }
}
