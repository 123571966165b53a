#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "lexsimp/autograd.hpp"
#include "lexsimp/corpus.hpp"

namespace lexsimp {

class Rng;

// Word <-> id mapping. Ids 0..3 are the reserved symbols in the order
// [UNK], [CLS], [SEP], [MASK]; unknown words map to [UNK].
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;

  Vocabulary();
  static Vocabulary build(const std::vector<const std::vector<SentenceTokens>*>& sources,
                          const std::vector<std::string>& extra = {});

  int add(const std::string& word);
  int id(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct EncoderConfig {
  int depth = 2;
  int heads = 4;
  int width = 32;
  int ffn_width = 64;
  int max_len = 64;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j) { return from_json(j, EncoderConfig{}); }
  static EncoderConfig from_json(const nlohmann::json& j, EncoderConfig base);
};

struct HiddenStates {
  nn::Matrix states;              // L x d
  Eigen::RowVectorXd sentence_rep;  // row 0 of states
};

// Encoder output recorded on a tape.
struct EncodedVars {
  nn::Var states;
  nn::Var sentence_rep;
  // Final-layer attention probabilities, one L x L matrix per head.
  std::vector<nn::Matrix> last_attention;
};

// Small post-LayerNorm transformer encoder with learned position embeddings
// and two token types.
class Encoder {
 public:
  Encoder(const EncoderConfig& config, Vocabulary vocab, const std::string& prefix = "encoder");

  const EncoderConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  int width() const { return config_.width; }

  // Token ids for a sentence, with the start token prepended when has_cls.
  std::vector<int> sentence_ids(const SentenceTokens& sentence) const;

  // w_l = tok_l * keep_l + typ_l + pos_l. `keep_col` is an L x 1 node; when
  // absent the token embedding enters unscaled. Position ids default to 0..L-1.
  nn::Var embed_ids(nn::Tape& tape, const std::vector<int>& ids, const std::vector<int>& types,
                    std::optional<nn::Var> keep_col, const std::vector<int>* positions = nullptr) const;

  // Sentence embedding with optional per-word keep probabilities (L_words x 1
  // node). The start token, when present, is always kept.
  nn::Var embed(nn::Tape& tape, const SentenceTokens& sentence, std::optional<nn::Var> word_keep) const;

  EncodedVars encode(nn::Tape& tape, nn::Var embedded, bool train_mode, Rng* rng) const;

  // Value-level conveniences without gradient bookkeeping.
  nn::Matrix embed(const SentenceTokens& sentence, const std::vector<double>* keep_probs = nullptr) const;
  HiddenStates encode(const nn::Matrix& embedded, bool train_mode = false, Rng* rng = nullptr) const;

  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  void set_frozen(bool frozen);

  // Copies every parameter value from `other`; configs must match.
  void load_weights_from(const Encoder& other);

 private:
  struct Layer {
    nn::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Parameter ln1_g, ln1_b;
    nn::Parameter w1, b1, w2, b2;
    nn::Parameter ln2_g, ln2_b;
  };

  void init_parameters(const std::string& prefix);
  nn::Var attention(nn::Tape& tape, const Layer& layer, nn::Var x, bool train_mode, Rng* rng,
                    std::vector<nn::Matrix>* probs) const;

  EncoderConfig config_;
  Vocabulary vocab_;
  nn::Parameter tok_, typ_, pos_, emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
};

}  // namespace lexsimp
