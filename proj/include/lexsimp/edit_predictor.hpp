#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lexsimp/encoder.hpp"

namespace lexsimp {

enum class Edit : char { Keep = 'K', Mask = 'M' };

// Word-aligned: one entry per stored token. The implicit start token is not
// represented and always counts as K.
struct EditProbs {
  std::vector<double> p_keep;
  std::size_t size() const { return p_keep.size(); }
};

struct EditSequence {
  std::vector<Edit> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t mask_count() const;
  bool is_mask(std::size_t i) const { return labels[i] == Edit::Mask; }
  static EditSequence all_keep(std::size_t n) { return {std::vector<Edit>(n, Edit::Keep)}; }

  friend bool operator==(const EditSequence&, const EditSequence&) = default;
};

// Space-joined "K"/"M" string.
std::string to_string(const EditSequence& edits);
EditSequence parse_edit_sequence(std::string_view text);

// M iff p_keep < threshold; ties keep.
EditSequence decode(const EditProbs& probs, double threshold = 0.5);
// As above, with pure-punctuation tokens clamped to K.
EditSequence decode(const EditProbs& probs, const SentenceTokens& sentence, double threshold = 0.5);

SentenceTokens apply_edits(const SentenceTokens& sentence, const EditSequence& edits);

class EditPredictor {
 public:
  struct Forward {
    nn::Var log_probs;  // L_words x 2, columns (K, M)
    nn::Var keep;       // L_words x 1, p_keep
  };

  // zero_head sets W and A to zero so every token starts at p_keep = 0.5.
  EditPredictor(const EncoderConfig& config, Vocabulary vocab, bool zero_head = false);

  const Encoder& encoder() const { return encoder_; }
  Encoder& encoder() { return encoder_; }

  Forward forward(nn::Tape& tape, const SentenceTokens& sentence, bool train_mode, Rng* rng) const;
  EditProbs predict_probs(const SentenceTokens& sentence) const;

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::vector<nn::Parameter*> head_parameters() { return {&head_w_, &head_a_}; }

  void save(const std::filesystem::path& path) const;
  static EditPredictor load(const std::filesystem::path& path);

 private:
  Encoder encoder_;
  nn::Parameter head_w_, head_a_;
};

}  // namespace lexsimp
