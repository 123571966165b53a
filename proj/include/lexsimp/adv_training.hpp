#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lexsimp/discriminator.hpp"
#include "lexsimp/edit_predictor.hpp"
#include "lexsimp/llm_oracle.hpp"

namespace lexsimp {

// Denominator floor for the cosine in the invariance loss.
inline constexpr double kCosineFloor = 1e-12;

struct LossWeights {
  double lambda1 = 1.0;  // confusion
  double lambda2 = 1.0;  // invariance
  double lambda3 = 1.0;  // LLM pseudo labels
  double alpha = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j) { return from_json(j, LossWeights{}); }
  static LossWeights from_json(const nlohmann::json& j, LossWeights base);
};

struct TrainSchedule {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int freeze_epochs = 4;
  int patience = 3;
  std::uint64_t seed = 1;
  double threshold = 0.5;
  double clip_norm = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainSchedule from_json(const nlohmann::json& j) { return from_json(j, TrainSchedule{}); }
  static TrainSchedule from_json(const nlohmann::json& j, TrainSchedule base);
};

struct TrainStepRecord {
  int epoch = 0;
  long step = 0;
  double conf = 0.0;
  double inv = 0.0;
  double llm = 0.0;
  double combined = 0.0;
  std::optional<double> dev_f1;

  nlohmann::json to_json() const;
};

double confusion_loss(double p_complex, double alpha);
// Throws NumericError on a zero-norm input.
double invariance_loss(const Eigen::RowVectorXd& h_orig, const Eigen::RowVectorXd& h_conf);

struct LlmLossValue {
  double value = 0.0;
  bool contributes = false;  // false when no token is aligned
};
LlmLossValue llm_loss(const EditProbs& probs, const EditSequence& pseudo, const std::vector<bool>& align_mask);

double combined_loss(double conf, double inv, double llm, const LossWeights& weights);

// Tape counterparts used during training.
nn::Var confusion_loss(nn::Tape& tape, nn::Var p_complex, double alpha);
nn::Var invariance_loss(nn::Tape& tape, nn::Var h_orig, nn::Var h_conf);
// `log_probs` is L x 2 with columns (K, M). Returns nullopt when nothing is aligned.
std::optional<nn::Var> llm_loss(nn::Tape& tape, nn::Var log_probs, const EditSequence& pseudo,
                                const std::vector<bool>& align_mask);

// Per-sentence loss terms on one tape. Exposed for gradient checks.
struct EditorLossTerms {
  nn::Var conf, inv, llm, total;
  bool has_llm = false;
};
EditorLossTerms editor_losses(nn::Tape& tape, const EditPredictor& editor, const Discriminator& disc,
                              const SentenceTokens& sentence, const PseudoLabels& labels,
                              const Eigen::RowVectorXd& h_orig, const LossWeights& weights, bool train_mode,
                              Rng* rng);

// Sentence representation of the unmasked sentence from the frozen discriminator.
Eigen::RowVectorXd reference_representation(const Discriminator& disc, const SentenceTokens& sentence);

// Macro CWI F1 of decoded predictions against usable pseudo labels.
double oracle_agreement_f1(const EditPredictor& editor, const std::vector<SentenceTokens>& sentences,
                           const std::vector<PseudoLabels>& labels, double threshold);

struct EditorTrainData {
  std::vector<SentenceTokens> train;
  std::vector<PseudoLabels> train_labels;
  std::vector<SentenceTokens> dev;
  std::vector<PseudoLabels> dev_labels;
};

struct EditorTrainResult {
  std::vector<TrainStepRecord> log;
  double best_dev_f1 = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  std::string discriminator_checksum;
};

// Trains `editor` against the frozen `disc`. Records go to `jsonl` as they
// are produced. The best-dev parameters are restored on return.
EditorTrainResult train_editor(EditPredictor& editor, const Discriminator& disc, const EditorTrainData& data,
                               const LossWeights& weights, const TrainSchedule& schedule,
                               std::ostream* jsonl = nullptr);

}  // namespace lexsimp
