#include "lexsimp/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

Vocabulary::Vocabulary() {
  for (auto sym : {kUnkToken, kClsToken, kSepToken, kMaskToken}) add(std::string(sym));
}

Vocabulary Vocabulary::build(const std::vector<const std::vector<SentenceTokens>*>& sources,
                             const std::vector<std::string>& extra) {
  std::map<std::string, std::size_t> counts;
  for (const auto* side : sources) {
    for (const auto& s : *side) {
      for (const auto& t : s.tokens) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, c] : ordered) v.add(w);
  for (const auto& w : extra) v.add(w);
  return v;
}

int Vocabulary::add(const std::string& word) {
  auto [it, inserted] = index_.try_emplace(word, static_cast<int>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

nlohmann::json Vocabulary::to_json() const { return words_; }

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  const auto words = j.get<std::vector<std::string>>();
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i < 4) {
      if (words[i] != v.words_[i]) throw FormatError("vocabulary does not start with the reserved symbols");
      continue;
    }
    v.add(words[i]);
  }
  return v;
}

void EncoderConfig::validate() const {
  if (depth < 1) throw ConfigError("encoder depth must be >= 1");
  if (heads < 1 || width < 1 || width % heads != 0) throw ConfigError("encoder width must be divisible by heads");
  if (ffn_width < 1) throw ConfigError("encoder ffn_width must be >= 1");
  if (max_len < 1) throw ConfigError("encoder max_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder dropout must lie in [0, 1)");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"depth", depth},       {"heads", heads},     {"width", width}, {"ffn_width", ffn_width},
          {"max_len", max_len},   {"dropout", dropout}, {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j, EncoderConfig c) {
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.width = j.value("width", c.width);
  c.ffn_width = j.value("ffn_width", c.ffn_width);
  c.max_len = j.value("max_len", c.max_len);
  c.dropout = j.value("dropout", c.dropout);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

nn::Parameter make_param(const std::string& name, int rows, int cols, double stddev, Rng& rng) {
  nn::Parameter p{name, nn::Matrix(rows, cols), false};
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = stddev * rng.normal();
  return p;
}

nn::Parameter make_const(const std::string& name, int rows, int cols, double v) {
  return nn::Parameter{name, nn::Matrix::Constant(rows, cols, v), false};
}

}  // namespace

Encoder::Encoder(const EncoderConfig& config, Vocabulary vocab, const std::string& prefix)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  init_parameters(prefix);
}

void Encoder::init_parameters(const std::string& prefix) {
  Rng rng(mix_seed(config_.seed, 7));
  const int d = config_.width;
  const int f = config_.ffn_width;
  const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
  tok_ = make_param(prefix + ".tok", vocab_.size(), d, 0.5, rng);
  typ_ = make_param(prefix + ".typ", 2, d, 0.1, rng);
  pos_ = make_param(prefix + ".pos", config_.max_len, d, 0.1, rng);
  emb_ln_g_ = make_const(prefix + ".emb_ln_g", 1, d, 1.0);
  emb_ln_b_ = make_const(prefix + ".emb_ln_b", 1, d, 0.0);
  layers_.clear();
  for (int l = 0; l < config_.depth; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer{make_param(p + ".wq", d, d, wstd, rng),  make_const(p + ".bq", 1, d, 0.0),
                make_param(p + ".wk", d, d, wstd, rng),  make_const(p + ".bk", 1, d, 0.0),
                make_param(p + ".wv", d, d, wstd, rng),  make_const(p + ".bv", 1, d, 0.0),
                make_param(p + ".wo", d, d, wstd, rng),  make_const(p + ".bo", 1, d, 0.0),
                make_const(p + ".ln1_g", 1, d, 1.0),     make_const(p + ".ln1_b", 1, d, 0.0),
                make_param(p + ".w1", d, f, wstd, rng),  make_const(p + ".b1", 1, f, 0.0),
                make_param(p + ".w2", f, d, 1.0 / std::sqrt(static_cast<double>(f)), rng),
                make_const(p + ".b2", 1, d, 0.0),
                make_const(p + ".ln2_g", 1, d, 1.0),     make_const(p + ".ln2_b", 1, d, 0.0)};
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> Encoder::sentence_ids(const SentenceTokens& sentence) const {
  std::vector<int> ids;
  ids.reserve(sentence.size() + 1);
  if (sentence.has_cls) ids.push_back(Vocabulary::kCls);
  for (const auto& t : sentence.tokens) ids.push_back(vocab_.id(t));
  return ids;
}

nn::Var Encoder::embed_ids(nn::Tape& tape, const std::vector<int>& ids, const std::vector<int>& types,
                           std::optional<nn::Var> keep_col, const std::vector<int>* position_ids) const {
  if (ids.empty()) throw ShapeError("cannot embed an empty sequence");
  if (types.size() != ids.size()) throw ShapeError("token type count differs from token count");
  if (static_cast<int>(ids.size()) > config_.max_len) {
    throw TruncationError("sequence of length " + std::to_string(ids.size()) + " exceeds max length " +
                          std::to_string(config_.max_len));
  }
  std::vector<int> positions(ids.size());
  if (position_ids) {
    if (position_ids->size() != ids.size()) throw ShapeError("position id count differs from token count");
    for (int p : *position_ids) {
      if (p < 0 || p >= config_.max_len) throw TruncationError("position id out of range: " + std::to_string(p));
    }
    positions = *position_ids;
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
  }
  nn::Var tok = tape.gather_rows(tok_, ids);
  if (keep_col) {
    const auto& kv = tape.value(*keep_col);
    if (kv.rows() != static_cast<Eigen::Index>(ids.size()) || kv.cols() != 1) {
      throw ShapeError("keep probabilities must have one entry per token");
    }
    tok = tape.scale_rows(tok, *keep_col);
  }
  nn::Var typ = tape.gather_rows(typ_, types);
  nn::Var pos = tape.gather_rows(pos_, positions);
  return tape.add(tape.add(tok, typ), pos);
}

nn::Var Encoder::embed(nn::Tape& tape, const SentenceTokens& sentence, std::optional<nn::Var> word_keep) const {
  const auto ids = sentence_ids(sentence);
  const std::vector<int> types(ids.size(), 0);
  if (!word_keep) return embed_ids(tape, ids, types, std::nullopt);
  const auto& kv = tape.value(*word_keep);
  if (kv.rows() != static_cast<Eigen::Index>(sentence.size()) || kv.cols() != 1) {
    throw ShapeError("keep probabilities must have one entry per word (" + std::to_string(kv.rows()) + " vs " +
                     std::to_string(sentence.size()) + ")");
  }
  nn::Var keep = *word_keep;
  if (sentence.has_cls) keep = tape.concat_rows({tape.constant(nn::Matrix::Ones(1, 1)), keep});
  return embed_ids(tape, ids, types, keep);
}

nn::Var Encoder::attention(nn::Tape& tape, const Layer& layer, nn::Var x, bool train_mode, Rng* rng,
                           std::vector<nn::Matrix>* probs) const {
  const int heads = config_.heads;
  const int dh = config_.width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  nn::Var q = tape.add_row(tape.matmul(x, tape.param(layer.wq)), tape.param(layer.bq));
  nn::Var k = tape.add_row(tape.matmul(x, tape.param(layer.wk)), tape.param(layer.bk));
  nn::Var v = tape.add_row(tape.matmul(x, tape.param(layer.wv)), tape.param(layer.bv));
  std::vector<nn::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    nn::Var qh = tape.slice_cols(q, h * dh, dh);
    nn::Var kh = tape.slice_cols(k, h * dh, dh);
    nn::Var vh = tape.slice_cols(v, h * dh, dh);
    nn::Var a = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
    if (probs) probs->push_back(tape.value(a));
    if (train_mode && rng) a = tape.dropout(a, config_.dropout, *rng);
    outs.push_back(tape.matmul(a, vh));
  }
  nn::Var cat = heads == 1 ? outs.front() : tape.concat_cols(outs);
  return tape.add_row(tape.matmul(cat, tape.param(layer.wo)), tape.param(layer.bo));
}

EncodedVars Encoder::encode(nn::Tape& tape, nn::Var embedded, bool train_mode, Rng* rng) const {
  const auto& ev = tape.value(embedded);
  if (ev.rows() > config_.max_len) {
    throw TruncationError("sequence of length " + std::to_string(ev.rows()) + " exceeds max length " +
                          std::to_string(config_.max_len));
  }
  if (ev.cols() != config_.width) throw ShapeError("embedded width differs from encoder width");
  if (!ev.allFinite()) throw NumericError("embedded sequence contains non-finite values");
  const bool drop = train_mode && rng != nullptr && config_.dropout > 0.0;
  nn::Var x = tape.layer_norm(embedded, tape.param(emb_ln_g_), tape.param(emb_ln_b_));
  if (drop) x = tape.dropout(x, config_.dropout, *rng);
  EncodedVars out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const bool last = l + 1 == layers_.size();
    nn::Var att = attention(tape, layer, x, drop, rng, last ? &out.last_attention : nullptr);
    if (drop) att = tape.dropout(att, config_.dropout, *rng);
    x = tape.layer_norm(tape.add(x, att), tape.param(layer.ln1_g), tape.param(layer.ln1_b));
    nn::Var h = tape.gelu(tape.add_row(tape.matmul(x, tape.param(layer.w1)), tape.param(layer.b1)));
    nn::Var ff = tape.add_row(tape.matmul(h, tape.param(layer.w2)), tape.param(layer.b2));
    if (drop) ff = tape.dropout(ff, config_.dropout, *rng);
    x = tape.layer_norm(tape.add(x, ff), tape.param(layer.ln2_g), tape.param(layer.ln2_b));
  }
  out.states = x;
  out.sentence_rep = tape.slice_rows(x, 0, 1);
  return out;
}

nn::Matrix Encoder::embed(const SentenceTokens& sentence, const std::vector<double>* keep_probs) const {
  nn::Tape tape;
  if (!keep_probs) return tape.value(embed(tape, sentence, std::nullopt));
  if (keep_probs->size() != sentence.size()) throw ShapeError("keep probabilities must have one entry per word");
  nn::Matrix keep(static_cast<Eigen::Index>(keep_probs->size()), 1);
  for (std::size_t i = 0; i < keep_probs->size(); ++i) {
    const double p = (*keep_probs)[i];
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("keep probability outside [0, 1]");
    keep(static_cast<Eigen::Index>(i), 0) = p;
  }
  return tape.value(embed(tape, sentence, tape.constant(std::move(keep))));
}

HiddenStates Encoder::encode(const nn::Matrix& embedded, bool train_mode, Rng* rng) const {
  nn::Tape tape;
  auto enc = encode(tape, tape.constant(embedded), train_mode, rng);
  HiddenStates hs;
  hs.states = tape.value(enc.states);
  hs.sentence_rep = hs.states.row(0);
  return hs;
}

std::vector<nn::Parameter*> Encoder::parameters() {
  std::vector<nn::Parameter*> ps{&tok_, &typ_, &pos_, &emb_ln_g_, &emb_ln_b_};
  for (auto& l : layers_) {
    for (auto* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_g, &l.ln1_b, &l.w1, &l.b1, &l.w2,
                    &l.b2, &l.ln2_g, &l.ln2_b}) {
      ps.push_back(p);
    }
  }
  return ps;
}

std::vector<const nn::Parameter*> Encoder::parameters() const {
  auto ps = const_cast<Encoder*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void Encoder::set_frozen(bool frozen) {
  for (auto* p : parameters()) p->frozen = frozen;
}

void Encoder::load_weights_from(const Encoder& other) {
  auto mine = parameters();
  auto theirs = other.parameters();
  if (mine.size() != theirs.size()) throw ShapeError("encoder architectures differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->value.rows() != theirs[i]->value.rows() || mine[i]->value.cols() != theirs[i]->value.cols()) {
      throw ShapeError("encoder parameter shape differs: " + mine[i]->name);
    }
    mine[i]->value = theirs[i]->value;
  }
}

}  // namespace lexsimp
