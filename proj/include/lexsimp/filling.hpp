#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lexsimp/edit_predictor.hpp"
#include "lexsimp/encoder.hpp"

namespace lexsimp {

inline constexpr std::string_view kFillInstruction = "The simpler version of the previous sentence is:";

struct FillInput {
  std::vector<std::string> sequence;  // [CLS] original [SEP] instruction masked [SEP]
  std::vector<int> types;             // 0 for the original segment, 1 afterwards
  std::vector<std::size_t> mask_positions;
  std::size_t masked_offset = 0;      // index of the first masked-sentence token
};

FillInput build_fill_input(const SentenceTokens& original, const SentenceTokens& masked);

using Candidate = std::pair<std::string, double>;
using CandidateList = std::vector<Candidate>;

// Drops words outside ^[a-z]+$ (after lowercasing), the complex word, words
// sharing its stem, and repeats. Order is preserved.
CandidateList filter_candidates(const CandidateList& raw, const std::string& complex_word);

struct FillerTrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  double min_mask_rate = 0.15;
  double max_mask_rate = 0.3;
  std::uint64_t seed = 1;
};

// Pseudo-parallel pair: a complex sentence and a simple-side sentence.
struct FillPair {
  SentenceTokens complex;
  SentenceTokens simple;
};

// For each simple sentence, the complex sentence with the highest
// IDF-weighted token-set Jaccard overlap (lowest index on ties). Document
// frequencies are counted over both sides.
std::vector<FillPair> mine_fill_pairs(const std::vector<SentenceTokens>& complex_side,
                                      const std::vector<SentenceTokens>& simple_side);

class FillModel {
 public:
  FillModel(const EncoderConfig& config, Vocabulary vocab);

  const Encoder& encoder() const { return encoder_; }
  const Vocabulary& vocab() const { return encoder_.vocab(); }

  // Log-probabilities over the vocabulary at `rows` of the input (rows x V).
  nn::Var forward(nn::Tape& tape, const FillInput& input, const std::vector<std::size_t>& rows, bool train_mode,
                  Rng* rng) const;

  // Per mask position, the top-k filtered candidates by probability.
  std::vector<CandidateList> predict_candidates(const FillInput& input, std::size_t k,
                                                const std::vector<std::string>& complex_words) const;
  // Unfiltered top-k at every mask position.
  std::vector<CandidateList> predict_raw(const FillInput& input, std::size_t k) const;

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;

  void save(const std::filesystem::path& path) const;
  static FillModel load(const std::filesystem::path& path);

 private:
  Encoder encoder_;
  nn::Parameter out_w_, out_b_;
};

// Vocabulary for the filler: corpus words plus instruction tokens.
Vocabulary fill_vocabulary(const NonParallelCorpus& corpus);

struct FillerTrainResult {
  std::vector<double> epoch_loss;
};

FillerTrainResult train_filler(FillModel& model, const std::vector<FillPair>& pairs, const FillerTrainConfig& config);

struct MaskCandidates {
  std::size_t position = 0;
  std::string complex_word;
  CandidateList candidates;
};

struct SimplificationResult {
  SentenceTokens original;
  EditSequence edits;
  SentenceTokens masked;
  std::vector<MaskCandidates> candidates;
  SentenceTokens final_sentence;

  nlohmann::json to_json() const;
  static SimplificationResult from_json(const nlohmann::json& j);
};

// Fills the given edits (no prediction step).
SimplificationResult fill_edits(const SentenceTokens& sentence, const EditSequence& edits, const FillModel& filler,
                                std::size_t k);

SimplificationResult simplify_sentence(const SentenceTokens& sentence, const EditPredictor& predictor,
                                       const FillModel& filler, std::size_t k = 10, double threshold = 0.5);

}  // namespace lexsimp
