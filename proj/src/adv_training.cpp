#include "lexsimp/adv_training.hpp"

#include <cmath>

#include "lexsimp/errors.hpp"
#include "lexsimp/evaluation.hpp"
#include "lexsimp/optim.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and nonnegative");
  }
  if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0) throw ConfigError("at least one loss weight must be nonzero");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

nlohmann::json LossWeights::to_json() const {
  return {{"lambda1", lambda1}, {"lambda2", lambda2}, {"lambda3", lambda3}, {"alpha", alpha}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j, LossWeights w) {
  w.lambda1 = j.value("lambda1", w.lambda1);
  w.lambda2 = j.value("lambda2", w.lambda2);
  w.lambda3 = j.value("lambda3", w.lambda3);
  w.alpha = j.value("alpha", w.alpha);
  w.validate();
  return w;
}

void TrainSchedule::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (freeze_epochs < 0 || freeze_epochs >= epochs) throw ConfigError("freeze epochs must be below total epochs");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
}

nlohmann::json TrainSchedule::to_json() const {
  return {{"epochs", epochs},   {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"freeze_epochs", freeze_epochs}, {"patience", patience}, {"seed", seed},
          {"threshold", threshold}, {"clip_norm", clip_norm}};
}

TrainSchedule TrainSchedule::from_json(const nlohmann::json& j, TrainSchedule s) {
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.freeze_epochs = j.value("freeze_epochs", s.freeze_epochs);
  s.patience = j.value("patience", s.patience);
  s.seed = j.value("seed", s.seed);
  s.threshold = j.value("threshold", s.threshold);
  s.clip_norm = j.value("clip_norm", s.clip_norm);
  s.validate();
  return s;
}

nlohmann::json TrainStepRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"step", step}, {"conf", conf},
                   {"inv", inv},     {"llm", llm},   {"combined", combined}};
  j["dev_f1"] = dev_f1 ? nlohmann::json(*dev_f1) : nlohmann::json(nullptr);
  return j;
}

double confusion_loss(double p_complex, double alpha) {
  const double d = p_complex - alpha;
  return d * d;
}

double invariance_loss(const Eigen::RowVectorXd& h_orig, const Eigen::RowVectorXd& h_conf) {
  if (h_orig.size() != h_conf.size()) throw ShapeError("invariance loss needs equal-width vectors");
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (Eigen::Index i = 0; i < h_orig.size(); ++i) {
    dot += h_orig(i) * h_conf(i);
    na2 += h_orig(i) * h_orig(i);
    nb2 += h_conf(i) * h_conf(i);
  }
  if (na2 == 0.0 || nb2 == 0.0) throw NumericError("invariance loss on a zero-norm representation");
  return 1.0 - dot / std::max(std::sqrt(na2 * nb2), kCosineFloor);
}

LlmLossValue llm_loss(const EditProbs& probs, const EditSequence& pseudo, const std::vector<bool>& align_mask) {
  if (probs.size() != pseudo.size() || probs.size() != align_mask.size()) {
    throw ShapeError("llm loss inputs differ in length");
  }
  LlmLossValue out;
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!align_mask[i]) continue;
    const double p = pseudo.is_mask(i) ? 1.0 - probs.p_keep[i] : probs.p_keep[i];
    sum -= std::log(p);
    ++n;
  }
  if (n == 0) return out;
  out.value = sum / static_cast<double>(n);
  out.contributes = true;
  return out;
}

double combined_loss(double conf, double inv, double llm, const LossWeights& w) {
  return w.lambda1 * conf + w.lambda2 * inv + w.lambda3 * llm;
}

nn::Var confusion_loss(nn::Tape& tape, nn::Var p_complex, double alpha) {
  return tape.square(tape.add_scalar(p_complex, -alpha));
}

nn::Var invariance_loss(nn::Tape& tape, nn::Var h_orig, nn::Var h_conf) {
  return tape.add_scalar(tape.scale(tape.cosine(h_orig, h_conf, kCosineFloor), -1.0), 1.0);
}

std::optional<nn::Var> llm_loss(nn::Tape& tape, nn::Var log_probs, const EditSequence& pseudo,
                                const std::vector<bool>& align_mask) {
  const auto& lp = tape.value(log_probs);
  const auto n = static_cast<std::size_t>(lp.rows());
  if (pseudo.size() != n || align_mask.size() != n || lp.cols() != 2) throw ShapeError("llm loss inputs differ in length");
  std::size_t aligned = 0;
  for (bool a : align_mask) aligned += a;
  if (aligned == 0) return std::nullopt;
  nn::Matrix w = nn::Matrix::Zero(lp.rows(), 2);
  for (std::size_t i = 0; i < n; ++i) {
    if (align_mask[i]) w(static_cast<Eigen::Index>(i), pseudo.is_mask(i) ? 1 : 0) = -1.0 / static_cast<double>(aligned);
  }
  return tape.weighted_sum(log_probs, w);
}

Eigen::RowVectorXd reference_representation(const Discriminator& disc, const SentenceTokens& sentence) {
  return disc.encoder().encode(disc.encoder().embed(sentence), false, nullptr).sentence_rep;
}

EditorLossTerms editor_losses(nn::Tape& tape, const EditPredictor& editor, const Discriminator& disc,
                              const SentenceTokens& sentence, const PseudoLabels& labels,
                              const Eigen::RowVectorXd& h_orig, const LossWeights& weights, bool train_mode,
                              Rng* rng) {
  EditorLossTerms t;
  auto f = editor.forward(tape, sentence, train_mode, rng);
  nn::Var zero = tape.constant(nn::Matrix::Zero(1, 1));
  t.conf = zero;
  t.inv = zero;
  t.llm = zero;
  if (weights.lambda1 > 0.0 || weights.lambda2 > 0.0) {
    nn::Var embedded = disc.encoder().embed(tape, sentence, f.keep);
    auto d = disc.forward(tape, embedded, false, nullptr);
    t.conf = confusion_loss(tape, tape.slice_cols(d.probs, 0, 1), weights.alpha);
    t.inv = invariance_loss(tape, tape.constant(h_orig), d.sentence_rep);
  }
  if (weights.lambda3 > 0.0) {
    if (auto l = llm_loss(tape, f.log_probs, labels.labels, labels.align_mask)) {
      t.llm = *l;
      t.has_llm = true;
    }
  }
  t.total = tape.add(tape.add(tape.scale(t.conf, weights.lambda1), tape.scale(t.inv, weights.lambda2)),
                     tape.scale(t.llm, weights.lambda3));
  return t;
}

double oracle_agreement_f1(const EditPredictor& editor, const std::vector<SentenceTokens>& sentences,
                           const std::vector<PseudoLabels>& labels, double threshold) {
  if (sentences.size() != labels.size()) throw ShapeError("dev sentences and labels differ in count");
  std::vector<PositionSet> preds, gold;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (!labels[i].usable) continue;
    const auto edits = decode(editor.predict_probs(sentences[i]), sentences[i], threshold);
    PositionSet p, g;
    for (std::size_t k = 0; k < edits.size(); ++k) {
      if (edits.is_mask(k)) p.insert(k);
      if (labels[i].labels.is_mask(k) && !is_punctuation(sentences[i][k])) g.insert(k);
    }
    preds.push_back(std::move(p));
    gold.push_back(std::move(g));
  }
  if (preds.empty()) return 0.0;
  return cwi_metrics(preds, gold).score.f1;
}

EditorTrainResult train_editor(EditPredictor& editor, const Discriminator& disc, const EditorTrainData& data,
                               const LossWeights& weights, const TrainSchedule& schedule, std::ostream* jsonl) {
  weights.validate();
  schedule.validate();
  if (!disc.trained()) throw StateError("editor training needs a trained discriminator");
  if (!disc.frozen()) throw StateError("discriminator must be frozen before editor training");
  if (data.train.empty()) throw EmptyCorpusError("no complex sentences to train the editor on");
  if (data.train.size() != data.train_labels.size()) throw ShapeError("training sentences and pseudo labels differ");

  EditorTrainResult result;
  result.discriminator_checksum = disc.freeze_checksum();

  std::vector<Eigen::RowVectorXd> h_orig;
  h_orig.reserve(data.train.size());
  for (const auto& s : data.train) h_orig.push_back(reference_representation(disc, s));

  Adam adam(editor.parameters(), AdamConfig{schedule.learning_rate, 0.9, 0.999, 1e-8, schedule.clip_norm});
  Rng rng(mix_seed(schedule.seed, 41));
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  nn::GradBuffer grads;
  std::vector<nn::Matrix> best;
  double best_f1 = -1.0;
  int stale = 0;
  long step = 0;

  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    editor.encoder().set_frozen(epoch <= schedule.freeze_epochs);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(schedule.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(schedule.batch_size));
      const double n = static_cast<double>(end - start);
      grads.clear();
      TrainStepRecord rec;
      rec.epoch = epoch;
      rec.step = ++step;
      bool finite = true;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        nn::Tape tape(&grads);
        auto terms = editor_losses(tape, editor, disc, data.train[i], data.train_labels[i], h_orig[i], weights,
                                   true, &rng);
        const double c = tape.scalar(terms.conf), v = tape.scalar(terms.inv), l = tape.scalar(terms.llm);
        if (!std::isfinite(c) || !std::isfinite(v) || !std::isfinite(l)) {
          finite = false;
          break;
        }
        rec.conf += c / n;
        rec.inv += v / n;
        rec.llm += l / n;
        tape.backward(terms.total);
      }
      if (!finite) {
        std::string dump;
        for (std::size_t k = start; k < end; ++k) dump += "\n  " + data.train[order[k]].text();
        throw TrainingError("non-finite editor loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + "; batch:" + dump);
      }
      rec.combined = combined_loss(rec.conf, rec.inv, rec.llm, weights);
      adam.step(grads, 1.0 / n);
      const bool epoch_end = end == order.size();
      if (epoch_end) {
        rec.dev_f1 = data.dev.empty() ? oracle_agreement_f1(editor, data.train, data.train_labels, schedule.threshold)
                                      : oracle_agreement_f1(editor, data.dev, data.dev_labels, schedule.threshold);
      }
      if (jsonl) *jsonl << rec.to_json().dump() << "\n";
      result.log.push_back(rec);
    }
    result.epochs_run = epoch;
    const double f1 = *result.log.back().dev_f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      result.best_epoch = epoch;
      best.clear();
      for (const auto* p : editor.parameters()) best.push_back(p->value);
      stale = 0;
    } else if (epoch > schedule.freeze_epochs && ++stale >= schedule.patience) {
      result.early_stopped = true;
      break;
    }
  }
  editor.encoder().set_frozen(false);
  auto ps = editor.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = best[i];
  result.best_dev_f1 = best_f1;

  if (disc.freeze_checksum() != result.discriminator_checksum) {
    throw TrainingError("discriminator parameters changed during editor training");
  }
  return result;
}

}  // namespace lexsimp
