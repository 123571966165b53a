#include <cmath>
#include <vector>

#include "doctest.h"
#include "lexsimp/encoder.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

Encoder make_encoder(std::uint64_t seed = 1, int width = 8) {
  auto cfg = testing::tiny_encoder(seed);
  cfg.width = width;
  return Encoder(cfg, testing::pool_vocabulary());
}

// Scalar read-out of the encoder: fixed weights against all hidden states.
double readout(const Encoder& enc, const SentenceTokens& s, const nn::Matrix& keep, const nn::Matrix& weights,
               nn::Matrix* grad = nullptr) {
  nn::Tape tape;
  nn::Var k = tape.leaf(keep);
  auto out = enc.encode(tape, enc.embed(tape, s, k), false, nullptr);
  nn::Var loss = tape.weighted_sum(out.states, weights);
  if (grad) {
    tape.backward(loss);
    *grad = tape.grad(k);
  }
  return tape.scalar(loss);
}

}  // namespace

TEST_CASE("soft-mask identity: keep probabilities of one leave the embedding unchanged") {
  const auto enc = make_encoder();
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(20));
    const std::vector<double> ones(s.size(), 1.0);
    const nn::Matrix plain = enc.embed(s);
    const nn::Matrix soft = enc.embed(s, &ones);
    REQUIRE(plain.rows() == soft.rows());
    CHECK((plain.array() == soft.array()).all());
  }
}

TEST_CASE("zero keep probability leaves only type and position embeddings") {
  const auto enc = make_encoder();
  const auto params = enc.parameters();
  const nn::Matrix& typ = params[1]->value;
  const nn::Matrix& pos = params[2]->value;
  const SentenceTokens s{{"the", "water", "ran"}, true};
  const std::vector<double> keep{1.0, 0.0, 1.0};
  const nn::Matrix e = enc.embed(s, &keep);
  // Row 0 is the start token; word 1 sits at row 2.
  const nn::Matrix expected = typ.row(0) + pos.row(2);
  CHECK((e.row(2).array() == expected.array()).all());
}

TEST_CASE("half keep probability scales only the token embedding (d=4 hand computation)") {
  auto cfg = testing::tiny_encoder(9);
  cfg.width = 4;
  cfg.heads = 2;
  const Encoder enc(cfg, testing::pool_vocabulary());
  const auto params = enc.parameters();
  const nn::Matrix& tok = params[0]->value;
  const nn::Matrix& typ = params[1]->value;
  const nn::Matrix& pos = params[2]->value;
  const SentenceTokens s{{"dog", "ran"}, true};
  const std::vector<double> keep{0.5, 1.0};
  const nn::Matrix e = enc.embed(s, &keep);
  REQUIRE(e.rows() == 3);
  REQUIRE(e.cols() == 4);
  const int dog = enc.vocab().id("dog");
  const int ran = enc.vocab().id("ran");
  for (int c = 0; c < 4; ++c) {
    CHECK(e(1, c) == doctest::Approx(0.5 * tok(dog, c) + typ(0, c) + pos(1, c)).epsilon(1e-14));
    CHECK(e(2, c) == doctest::Approx(tok(ran, c) + typ(0, c) + pos(2, c)).epsilon(1e-14));
    CHECK(e(0, c) == doctest::Approx(tok(Vocabulary::kCls, c) + typ(0, c) + pos(0, c)).epsilon(1e-14));
  }
}

TEST_CASE("keep probabilities are validated") {
  const auto enc = make_encoder();
  const SentenceTokens s{{"the", "dog"}, true};
  const std::vector<double> short_keep{1.0};
  const std::vector<double> bad{1.0, 1.5};
  CHECK_THROWS_AS(enc.embed(s, &short_keep), ShapeError);
  CHECK_THROWS_AS(enc.embed(s, &bad), NumericError);
}

TEST_CASE("encode is deterministic in eval mode and keeps the row count") {
  const auto enc = make_encoder();
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(15));
    const auto e = enc.embed(s);
    const auto a = enc.encode(e);
    const auto b = enc.encode(e);
    CHECK((a.states.array() == b.states.array()).all());
    CHECK(a.states.rows() == e.rows());
    CHECK((a.sentence_rep.array() == a.states.row(0).array()).all());
    CHECK(a.states.allFinite());
  }
}

TEST_CASE("single-row input gives a single hidden state") {
  const auto enc = make_encoder();
  const SentenceTokens s{{"dog"}, false};
  const auto h = enc.encode(enc.embed(s));
  CHECK(h.states.rows() == 1);
  CHECK((h.sentence_rep.array() == h.states.row(0).array()).all());
}

TEST_CASE("swapping two distinct tokens changes the encoding") {
  const auto enc = make_encoder();
  const auto a = enc.encode(enc.embed(SentenceTokens{{"dog", "ran", "water"}, true}));
  const auto b = enc.encode(enc.embed(SentenceTokens{{"ran", "dog", "water"}, true}));
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("overlength input is an explicit truncation error") {
  auto cfg = testing::tiny_encoder();
  cfg.max_len = 4;
  const Encoder enc(cfg, testing::pool_vocabulary());
  const SentenceTokens s{{"a", "b", "c", "d"}, true};
  CHECK_THROWS_AS(enc.embed(s), TruncationError);
  CHECK_THROWS_AS(enc.encode(nn::Matrix::Zero(5, 8)), TruncationError);
}

TEST_CASE("gradient w.r.t. keep probabilities matches central differences") {
  Rng rng(21);
  constexpr double h = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    const auto enc = make_encoder(100 + static_cast<std::uint64_t>(trial));
    const auto s = testing::random_sentence(rng, 2 + rng.below(8));
    const auto L = static_cast<Eigen::Index>(s.size());
    nn::Matrix keep(L, 1);
    for (Eigen::Index i = 0; i < L; ++i) keep(i, 0) = 0.1 + 0.8 * rng.uniform();
    nn::Matrix w(L + 1, 8);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();

    nn::Matrix analytic;
    readout(enc, s, keep, w, &analytic);
    nn::Matrix numeric(L, 1);
    for (Eigen::Index i = 0; i < L; ++i) {
      nn::Matrix up = keep, down = keep;
      up(i, 0) += h;
      down(i, 0) -= h;
      numeric(i, 0) = (readout(enc, s, up, w) - readout(enc, s, down, w)) / (2 * h);
    }
    const double rel = (analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm());
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("vocabulary maps unknown words to the reserved unknown id and round-trips") {
  auto v = testing::pool_vocabulary();
  CHECK(v.id("[UNK]") == Vocabulary::kUnk);
  CHECK(v.id("[MASK]") == Vocabulary::kMask);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  const auto back = Vocabulary::from_json(v.to_json());
  CHECK(back.words() == v.words());
}

TEST_CASE("encoder config validation") {
  auto cfg = testing::tiny_encoder();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = testing::tiny_encoder();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
