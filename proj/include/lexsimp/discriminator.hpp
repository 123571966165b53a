#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lexsimp/encoder.hpp"

namespace lexsimp {

// Class 0 is the complex style, class 1 the simple style.
struct StyleProbability {
  double p_complex = 0.5;
  double p_simple = 0.5;
};

struct DiscriminatorTrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  // Per-token probability of replacing the keep factor with a U(0, 1) draw,
  // so the classifier sees soft-masked inputs before judging them.
  double soft_mask_rate = 0.15;
  std::uint64_t seed = 1;
};

struct DiscriminatorTrainResult {
  double dev_accuracy = 0.0;
  double train_accuracy = 0.0;
  int best_epoch = 0;
  std::vector<double> dev_accuracy_per_epoch;
};

class Discriminator {
 public:
  // Tape-level forward output.
  struct Forward {
    nn::Var logits;        // 1 x 2
    nn::Var probs;         // 1 x 2
    nn::Var sentence_rep;  // 1 x d
    EncodedVars encoded;
  };

  Discriminator(const EncoderConfig& config, Vocabulary vocab);

  const Encoder& encoder() const { return encoder_; }
  Encoder& encoder() { return encoder_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  StyleProbability classify(const SentenceTokens& sentence) const;
  // Routes an already embedded (possibly soft-masked) sequence through the encoder and head.
  StyleProbability classify_embedded(const nn::Matrix& embedded) const;
  Forward forward(nn::Tape& tape, nn::Var embedded, bool train_mode, Rng* rng) const;

  // Final-layer attention from the start token to each word, head-averaged,
  // start token excluded, renormalized. One score per word.
  std::vector<double> attention_scores(const SentenceTokens& sentence) const;

  void freeze();
  bool frozen() const;
  std::string freeze_checksum() const;

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  void save(const std::filesystem::path& path) const;
  static Discriminator load(const std::filesystem::path& path);

 private:
  void require_trained(const char* what) const;

  Encoder encoder_;
  nn::Parameter head_v_, head_b_;
  bool trained_ = false;
};

DiscriminatorTrainResult pretrain_discriminator(Discriminator& disc, const NonParallelCorpus& train,
                                                const NonParallelCorpus& dev,
                                                const DiscriminatorTrainConfig& config);

// Fraction of sentences whose argmax style matches their side.
double style_accuracy(const Discriminator& disc, const NonParallelCorpus& corpus);

}  // namespace lexsimp
