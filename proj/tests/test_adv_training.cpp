#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexsimp/adv_training.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

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

enum class Term { Conf, Inv, Llm };

double term_value(const EditPredictor& editor, const Discriminator& disc, const SentenceTokens& s,
                  const PseudoLabels& pl, const Eigen::RowVectorXd& h_orig, Term term, nn::GradBuffer* grads) {
  nn::Tape tape(grads);
  auto t = editor_losses(tape, editor, disc, s, pl, h_orig, LossWeights{}, false, nullptr);
  nn::Var v = term == Term::Conf ? t.conf : term == Term::Inv ? t.inv : t.llm;
  if (grads) tape.backward(v);
  return tape.scalar(v);
}

// Norm-wise relative error between the analytic and central-difference
// gradients over every edit-head entry.
double head_gradient_error(EditPredictor& editor, const Discriminator& disc, const SentenceTokens& s,
                           const PseudoLabels& pl, const Eigen::RowVectorXd& h_orig, Term term) {
  constexpr double h = 1e-3;
  nn::GradBuffer grads;
  term_value(editor, disc, s, pl, h_orig, term, &grads);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (nn::Parameter* p : editor.head_parameters()) {
    const nn::Matrix* g = grads.find(p);
    REQUIRE(g != nullptr);
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

struct TinySetup {
  EditPredictor editor;
  Discriminator disc;
};

TinySetup tiny_setup(std::uint64_t seed) {
  return TinySetup{EditPredictor(testing::tiny_encoder(seed), testing::pool_vocabulary()),
                   Discriminator(testing::tiny_encoder(seed + 1000), testing::pool_vocabulary())};
}

}  // namespace

TEST_CASE("confusion loss closed-form values") {
  CHECK(confusion_loss(0.5, 0.5) == 0.0);
  CHECK(confusion_loss(1.0, 0.5) == 0.25);
  CHECK(confusion_loss(0.9, 0.5) == doctest::Approx(0.16).epsilon(1e-12));
}

TEST_CASE("invariance loss closed-form values") {
  Eigen::RowVectorXd a(3), b(3);
  a << 1.0, 2.0, -0.5;
  CHECK(invariance_loss(a, a) == 0.0);
  CHECK(invariance_loss(a, -a) == 2.0);
  a << 1.0, 0.0, 0.0;
  b << 0.0, 3.0, 0.0;
  CHECK(invariance_loss(a, b) == 1.0);
  CHECK_THROWS_AS(invariance_loss(a, Eigen::RowVectorXd::Zero(3)), NumericError);
}

TEST_CASE("LLM loss closed-form values") {
  const EditProbs uniform{{0.5, 0.5, 0.5, 0.5, 0.5}};
  EditSequence pseudo = EditSequence::all_keep(5);
  pseudo.labels[1] = Edit::Mask;
  const auto v = llm_loss(uniform, pseudo, std::vector<bool>(5, true));
  CHECK(v.contributes);
  CHECK(std::abs(v.value - std::log(2.0)) <= 1e-9);

  const EditProbs onehot{{1.0, 0.0, 1.0}};
  EditSequence p3 = EditSequence::all_keep(3);
  p3.labels[1] = Edit::Mask;
  CHECK(llm_loss(onehot, p3, {true, true, true}).value == 0.0);

  // Pseudo-label probabilities 0.8 (K) and 0.4 (M) on the two aligned tokens.
  const EditProbs four{{0.8, 0.6, 0.3, 0.9}};
  EditSequence p4 = EditSequence::all_keep(4);
  p4.labels[1] = Edit::Mask;
  const auto w = llm_loss(four, p4, {true, true, false, false});
  CHECK(w.value == doctest::Approx(-(std::log(0.8) + std::log(0.4)) / 2).epsilon(1e-12));
  CHECK(w.value == doctest::Approx(0.5696).epsilon(1e-4));

  const auto none = llm_loss(four, p4, std::vector<bool>(4, false));
  CHECK_FALSE(none.contributes);
  CHECK(none.value == 0.0);
  CHECK_THROWS_AS(llm_loss(four, p3, {true, true, true}), ShapeError);
}

TEST_CASE("combined loss is the weighted sum") {
  const LossWeights unit{};
  CHECK(combined_loss(0.16, 0.10, 0.6931, unit) == doctest::Approx(0.9531).epsilon(1e-12));
  LossWeights no_llm;
  no_llm.lambda3 = 0.0;
  CHECK(combined_loss(0.16, 0.10, 0.6931, no_llm) == doctest::Approx(0.26).epsilon(1e-12));
  LossWeights twice{2.0, 2.0, 2.0, 0.5};
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const double c = rng.uniform(), v = 2 * rng.uniform(), l = 3 * rng.uniform();
    CHECK(combined_loss(c, v, l, twice) == doctest::Approx(2 * combined_loss(c, v, l, unit)).epsilon(1e-12));
  }
}

TEST_CASE("loss bounds hold on random inputs") {
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const double p = rng.uniform(), alpha = 0.01 + 0.98 * rng.uniform();
    const double c = confusion_loss(p, alpha);
    CHECK(c >= 0.0);
    CHECK(c <= std::pow(std::max(alpha, 1 - alpha), 2) + 1e-15);
    Eigen::RowVectorXd a(6), b(6);
    for (int k = 0; k < 6; ++k) {
      a(k) = rng.normal();
      b(k) = rng.normal();
    }
    const double v = invariance_loss(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
    EditProbs probs;
    for (int k = 0; k < 5; ++k) probs.p_keep.push_back(0.01 + 0.98 * rng.uniform());
    const auto pl = random_labels(rng, 5);
    CHECK(llm_loss(probs, pl.labels, pl.align_mask).value >= 0.0);
  }
}

TEST_CASE("tape losses agree with the scalar losses") {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    nn::Tape tape;
    const double p = rng.uniform();
    CHECK(tape.scalar(confusion_loss(tape, tape.constant(nn::Matrix::Constant(1, 1, p)), 0.5)) ==
          doctest::Approx(confusion_loss(p, 0.5)).epsilon(1e-14));
    Eigen::RowVectorXd a(4), b(4);
    for (int k = 0; k < 4; ++k) {
      a(k) = rng.normal();
      b(k) = rng.normal();
    }
    CHECK(tape.scalar(invariance_loss(tape, tape.constant(a), tape.constant(b))) ==
          doctest::Approx(invariance_loss(a, b)).epsilon(1e-12));
    EditProbs probs;
    nn::Matrix lp(5, 2);
    for (int k = 0; k < 5; ++k) {
      const double q = 0.05 + 0.9 * rng.uniform();
      probs.p_keep.push_back(q);
      lp(k, 0) = std::log(q);
      lp(k, 1) = std::log(1 - q);
    }
    const auto pl = random_labels(rng, 5);
    const auto v = llm_loss(tape, tape.constant(lp), pl.labels, pl.align_mask);
    REQUIRE(v.has_value());
    CHECK(tape.scalar(*v) == doctest::Approx(llm_loss(probs, pl.labels, pl.align_mask).value).epsilon(1e-12));
  }
}

TEST_CASE("edit-head gradients of all three losses match central differences (d=8, depth 1)") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto setup = tiny_setup(500 + static_cast<std::uint64_t>(trial));
    const auto s = testing::random_sentence(rng, 2 + rng.below(8));
    const auto pl = random_labels(rng, s.size());
    const auto h_orig = reference_representation(setup.disc, s);
    for (Term term : {Term::Conf, Term::Inv, Term::Llm}) {
      const double rel = head_gradient_error(setup.editor, setup.disc, s, pl, h_orig, term);
      INFO("trial " << trial << " term " << static_cast<int>(term) << " relative error " << rel);
      CHECK(rel < 1e-4);
    }
  }
}

TEST_CASE("invariance loss is zero under keep probabilities of one in eval mode") {
  Rng rng(17);
  const Discriminator disc(testing::tiny_encoder(77), testing::pool_vocabulary());
  for (int i = 0; i < 50; ++i) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(15));
    const auto h_orig = reference_representation(disc, s);
    nn::Tape tape;
    nn::Var keep = tape.constant(nn::Matrix::Ones(static_cast<Eigen::Index>(s.size()), 1));
    auto f = disc.forward(tape, disc.encoder().embed(tape, s, keep), false, nullptr);
    CHECK(tape.scalar(invariance_loss(tape, tape.constant(h_orig), f.sentence_rep)) == 0.0);
    CHECK(invariance_loss(h_orig, tape.value(f.sentence_rep).row(0)) == 0.0);
  }
}

TEST_CASE("editor_losses total equals the weighted terms") {
  Rng rng(41);
  auto setup = tiny_setup(9);
  const LossWeights w{0.7, 1.3, 2.1, 0.4};
  for (int i = 0; i < 10; ++i) {
    const auto s = testing::random_sentence(rng, 3 + rng.below(6));
    const auto pl = random_labels(rng, s.size());
    nn::Tape tape;
    auto t = editor_losses(tape, setup.editor, setup.disc, s, pl, reference_representation(setup.disc, s), w,
                           false, nullptr);
    CHECK(t.has_llm);
    CHECK(tape.scalar(t.total) ==
          doctest::Approx(combined_loss(tape.scalar(t.conf), tape.scalar(t.inv), tape.scalar(t.llm), w))
              .epsilon(1e-12));
  }
}

TEST_CASE("train_editor keeps the discriminator frozen and logs decomposable records") {
  Rng rng(5);
  auto setup = tiny_setup(3);
  setup.disc.mark_trained();
  setup.disc.freeze();
  EditorTrainData data;
  for (int i = 0; i < 24; ++i) {
    data.train.push_back(testing::random_sentence(rng, 3 + rng.below(5)));
    data.train_labels.push_back(random_labels(rng, data.train.back().size()));
  }
  for (int i = 0; i < 6; ++i) {
    data.dev.push_back(testing::random_sentence(rng, 3 + rng.below(5)));
    data.dev_labels.push_back(random_labels(rng, data.dev.back().size()));
  }
  TrainSchedule sched;
  sched.epochs = 3;
  sched.freeze_epochs = 1;
  sched.batch_size = 8;
  sched.patience = 5;
  const LossWeights w{1.0, 0.5, 2.0, 0.5};
  const auto before = setup.disc.freeze_checksum();
  std::ostringstream jsonl;
  const auto result = train_editor(setup.editor, setup.disc, data, w, sched, &jsonl);
  CHECK(setup.disc.freeze_checksum() == before);
  CHECK(result.discriminator_checksum == before);
  CHECK(result.epochs_run == 3);
  REQUIRE(result.log.size() == 9);
  for (const auto& r : result.log) {
    CHECK(std::abs(r.combined - (w.lambda1 * r.conf + w.lambda2 * r.inv + w.lambda3 * r.llm)) <= 1e-6);
  }
  std::istringstream lines(jsonl.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("combined"));
    ++n;
  }
  CHECK(n == result.log.size());
}

TEST_CASE("train_editor refuses an unfrozen or untrained discriminator") {
  Rng rng(6);
  auto setup = tiny_setup(4);
  EditorTrainData data;
  data.train.push_back(testing::random_sentence(rng, 4));
  data.train_labels.push_back(random_labels(rng, 4));
  TrainSchedule sched;
  sched.epochs = 2;
  sched.freeze_epochs = 0;
  CHECK_THROWS_AS(train_editor(setup.editor, setup.disc, data, LossWeights{}, sched), StateError);
  setup.disc.mark_trained();
  CHECK_THROWS_AS(train_editor(setup.editor, setup.disc, data, LossWeights{}, sched), StateError);
}

TEST_CASE("loss weights and schedule validation") {
  CHECK_THROWS_AS((LossWeights{0.0, 0.0, 0.0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{1.0, -1.0, 0.0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{1.0, 1.0, 1.0, 1.0}.validate()), ConfigError);
  TrainSchedule s;
  s.freeze_epochs = s.epochs;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  const TrainSchedule d;
  CHECK(d.epochs == 30);
  CHECK(d.batch_size == 32);
  CHECK(d.freeze_epochs == 4);
  CHECK(d.patience == 3);
  const LossWeights lw;
  CHECK(lw.alpha == 0.5);
  CHECK(lw.lambda1 == 1.0);
  CHECK(lw.lambda2 == 1.0);
  CHECK(lw.lambda3 == 1.0);
}
