#include "lexsimp/discriminator.hpp"

#include <cmath>

#include "lexsimp/checkpoint.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/optim.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

Discriminator::Discriminator(const EncoderConfig& config, Vocabulary vocab)
    : encoder_(config, std::move(vocab), "disc.encoder") {
  Rng rng(mix_seed(config.seed, 11));
  head_v_.name = "disc.head.v";
  head_v_.value = nn::Matrix(config.width, 2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.width));
  for (Eigen::Index i = 0; i < head_v_.value.size(); ++i) head_v_.value.data()[i] = rng.normal() * scale;
  head_b_.name = "disc.head.b";
  head_b_.value = nn::Matrix::Zero(1, 2);
}

void Discriminator::require_trained(const char* what) const {
  if (!trained_) throw StateError(std::string(what) + " called on an untrained discriminator");
}

Discriminator::Forward Discriminator::forward(nn::Tape& tape, nn::Var embedded, bool train_mode, Rng* rng) const {
  Forward f;
  f.encoded = encoder_.encode(tape, embedded, train_mode, rng);
  f.sentence_rep = f.encoded.sentence_rep;
  f.logits = tape.add_row(tape.matmul(f.sentence_rep, tape.param(head_v_)), tape.param(head_b_));
  f.probs = tape.softmax_rows(f.logits);
  return f;
}

StyleProbability Discriminator::classify(const SentenceTokens& sentence) const {
  require_trained("classify");
  nn::Tape tape;
  auto f = forward(tape, encoder_.embed(tape, sentence, std::nullopt), false, nullptr);
  const auto& p = tape.value(f.probs);
  return {p(0, 0), p(0, 1)};
}

StyleProbability Discriminator::classify_embedded(const nn::Matrix& embedded) const {
  require_trained("classify");
  nn::Tape tape;
  auto f = forward(tape, tape.constant(embedded), false, nullptr);
  const auto& p = tape.value(f.probs);
  return {p(0, 0), p(0, 1)};
}

std::vector<double> Discriminator::attention_scores(const SentenceTokens& sentence) const {
  require_trained("attention_scores");
  if (!sentence.has_cls) throw StateError("attention scores need the sentence-start token");
  nn::Tape tape;
  auto enc = encoder_.encode(tape, encoder_.embed(tape, sentence, std::nullopt), false, nullptr);
  const auto n = static_cast<Eigen::Index>(sentence.size());
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
  for (const auto& a : enc.last_attention) row += a.row(0).segment(1, n);
  row /= static_cast<double>(enc.last_attention.size());
  const double total = row.sum();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = row(i) / total;
  return out;
}

void Discriminator::freeze() {
  for (auto* p : parameters()) p->frozen = true;
}

bool Discriminator::frozen() const {
  for (const auto* p : parameters()) {
    if (!p->frozen) return false;
  }
  return true;
}

std::string Discriminator::freeze_checksum() const { return parameter_digest(parameters()); }

std::vector<nn::Parameter*> Discriminator::parameters() {
  auto ps = encoder_.parameters();
  ps.push_back(&head_v_);
  ps.push_back(&head_b_);
  return ps;
}

std::vector<const nn::Parameter*> Discriminator::parameters() const {
  auto ps = const_cast<Discriminator*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void Discriminator::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["kind"] = "discriminator";
  meta["encoder"] = encoder_.config().to_json();
  meta["vocab"] = encoder_.vocab().to_json();
  meta["labels"] = {"complex", "simple"};
  meta["trained"] = trained_;
  write_checkpoint(path, meta, parameters());
}

Discriminator Discriminator::load(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "discriminator") throw FormatError("not a discriminator checkpoint: " + path.string());
  Discriminator disc(EncoderConfig::from_json(ckpt.meta.at("encoder")), Vocabulary::from_json(ckpt.meta.at("vocab")));
  assign_parameters(ckpt, disc.parameters());
  disc.trained_ = ckpt.meta.value("trained", false);
  return disc;
}

double style_accuracy(const Discriminator& disc, const NonParallelCorpus& corpus) {
  std::size_t correct = 0;
  for (const auto& s : corpus.complex_sentences) correct += disc.classify(s).p_complex > 0.5;
  for (const auto& s : corpus.simple_sentences) correct += disc.classify(s).p_simple >= 0.5;
  const auto total = corpus.complex_sentences.size() + corpus.simple_sentences.size();
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

DiscriminatorTrainResult pretrain_discriminator(Discriminator& disc, const NonParallelCorpus& train,
                                                const NonParallelCorpus& dev,
                                                const DiscriminatorTrainConfig& config) {
  if (train.complex_sentences.empty() || train.simple_sentences.empty()) {
    throw EmptyCorpusError("discriminator training needs both styles");
  }
  if (config.epochs < 1 || config.batch_size < 2) throw ConfigError("invalid discriminator schedule");
  if (!(config.soft_mask_rate >= 0.0 && config.soft_mask_rate < 1.0)) throw ConfigError("soft_mask_rate must lie in [0, 1)");
  for (auto* p : disc.parameters()) p->frozen = false;
  Adam adam(disc.parameters(), AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  Rng rng(mix_seed(config.seed, 21));

  const std::size_t half = static_cast<std::size_t>(config.batch_size) / 2;
  const std::size_t nc = train.complex_sentences.size();
  const std::size_t ns = train.simple_sentences.size();
  const std::size_t steps = (std::max(nc, ns) + half - 1) / half;

  DiscriminatorTrainResult result;
  std::vector<nn::Matrix> best;
  double best_acc = -1.0;
  long step_counter = 0;
  double last_finite = 0.0;
  nn::GradBuffer grads;

  std::vector<std::size_t> cperm(nc), sperm(ns);
  for (std::size_t i = 0; i < nc; ++i) cperm[i] = i;
  for (std::size_t i = 0; i < ns; ++i) sperm[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(cperm);
    rng.shuffle(sperm);
    for (std::size_t step = 0; step < steps; ++step) {
      grads.clear();
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < 2 * half; ++k) {
        const bool complex_side = k < half;
        const std::size_t slot = step * half + (complex_side ? k : k - half);
        const SentenceTokens& s = complex_side ? train.complex_sentences[cperm[slot % nc]]
                                               : train.simple_sentences[sperm[slot % ns]];
        nn::Tape tape(&grads);
        std::optional<nn::Var> keep;
        if (config.soft_mask_rate > 0.0) {
          nn::Matrix k = nn::Matrix::Ones(static_cast<Eigen::Index>(s.size()), 1);
          for (Eigen::Index i = 0; i < k.rows(); ++i) {
            if (rng.bernoulli(config.soft_mask_rate)) k(i, 0) = rng.uniform();
          }
          keep = tape.constant(std::move(k));
        }
        auto f = disc.forward(tape, disc.encoder().embed(tape, s, keep), true, &rng);
        nn::Matrix pick = nn::Matrix::Zero(1, 2);
        pick(0, complex_side ? 0 : 1) = -1.0;
        nn::Var loss = tape.weighted_sum(tape.log_softmax_rows(f.logits), pick);
        batch_loss += tape.scalar(loss);
        tape.backward(loss);
      }
      ++step_counter;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("discriminator loss diverged at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step_counter) + "; last finite batch loss " + std::to_string(last_finite));
      }
      last_finite = batch_loss / static_cast<double>(2 * half);
      adam.step(grads, 1.0 / static_cast<double>(2 * half));
    }
    disc.mark_trained();
    const double acc = style_accuracy(disc, dev.complex_sentences.empty() && dev.simple_sentences.empty() ? train : dev);
    result.dev_accuracy_per_epoch.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      result.best_epoch = epoch;
      best.clear();
      for (const auto* p : disc.parameters()) best.push_back(p->value);
    }
  }
  auto ps = disc.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = best[i];
  result.dev_accuracy = best_acc;
  result.train_accuracy = style_accuracy(disc, train);
  return result;
}

}  // namespace lexsimp
