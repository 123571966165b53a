#include "lexsimp/edit_predictor.hpp"

#include <cmath>
#include <sstream>

#include "lexsimp/checkpoint.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

std::size_t EditSequence::mask_count() const {
  std::size_t n = 0;
  for (auto e : labels) n += e == Edit::Mask;
  return n;
}

std::string to_string(const EditSequence& edits) {
  std::string out;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (i) out += ' ';
    out += static_cast<char>(edits.labels[i]);
  }
  return out;
}

EditSequence parse_edit_sequence(std::string_view text) {
  EditSequence out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    if (tok == "K") {
      out.labels.push_back(Edit::Keep);
    } else if (tok == "M") {
      out.labels.push_back(Edit::Mask);
    } else {
      throw FormatError("edit label must be K or M, got '" + tok + "'");
    }
  }
  return out;
}

EditSequence decode(const EditProbs& probs, double threshold) {
  EditSequence out;
  out.labels.reserve(probs.size());
  for (double p : probs.p_keep) out.labels.push_back(p < threshold ? Edit::Mask : Edit::Keep);
  return out;
}

EditSequence decode(const EditProbs& probs, const SentenceTokens& sentence, double threshold) {
  if (probs.size() != sentence.size()) throw ShapeError("edit probabilities and sentence differ in length");
  EditSequence out = decode(probs, threshold);
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (is_punctuation(sentence[i])) out.labels[i] = Edit::Keep;
  }
  return out;
}

SentenceTokens apply_edits(const SentenceTokens& sentence, const EditSequence& edits) {
  if (edits.size() != sentence.size()) {
    throw ShapeError("edit sequence length " + std::to_string(edits.size()) + " differs from sentence length " +
                     std::to_string(sentence.size()));
  }
  SentenceTokens out = sentence;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (edits.is_mask(i)) out.tokens[i] = std::string(kMaskToken);
  }
  return out;
}

EditPredictor::EditPredictor(const EncoderConfig& config, Vocabulary vocab, bool zero_head)
    : encoder_(config, std::move(vocab), "editor.encoder") {
  head_w_.name = "editor.head.w";
  head_a_.name = "editor.head.a";
  head_w_.value = nn::Matrix::Zero(config.width, 2);
  head_a_.value = nn::Matrix::Zero(1, 2);
  if (!zero_head) {
    Rng rng(mix_seed(config.seed, 31));
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.width));
    for (Eigen::Index i = 0; i < head_w_.value.size(); ++i) head_w_.value.data()[i] = rng.normal() * scale;
  }
}

EditPredictor::Forward EditPredictor::forward(nn::Tape& tape, const SentenceTokens& sentence, bool train_mode,
                                              Rng* rng) const {
  auto enc = encoder_.encode(tape, encoder_.embed(tape, sentence, std::nullopt), train_mode, rng);
  nn::Var words = enc.states;
  if (sentence.has_cls) words = tape.slice_rows(enc.states, 1, static_cast<int>(sentence.size()));
  nn::Var logits = tape.add_row(tape.matmul(words, tape.param(head_w_)), tape.param(head_a_));
  Forward f;
  f.log_probs = tape.log_softmax_rows(logits);
  f.keep = tape.slice_cols(tape.softmax_rows(logits), 0, 1);
  return f;
}

EditProbs EditPredictor::predict_probs(const SentenceTokens& sentence) const {
  nn::Tape tape;
  auto f = forward(tape, sentence, false, nullptr);
  const auto& k = tape.value(f.keep);
  EditProbs out;
  out.p_keep.assign(k.data(), k.data() + k.size());
  return out;
}

std::vector<nn::Parameter*> EditPredictor::parameters() {
  auto ps = encoder_.parameters();
  ps.push_back(&head_w_);
  ps.push_back(&head_a_);
  return ps;
}

std::vector<const nn::Parameter*> EditPredictor::parameters() const {
  auto ps = const_cast<EditPredictor*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void EditPredictor::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["kind"] = "edit_predictor";
  meta["encoder"] = encoder_.config().to_json();
  meta["vocab"] = encoder_.vocab().to_json();
  write_checkpoint(path, meta, parameters());
}

EditPredictor EditPredictor::load(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "edit_predictor") throw FormatError("not an edit predictor checkpoint: " + path.string());
  EditPredictor ep(EncoderConfig::from_json(ckpt.meta.at("encoder")), Vocabulary::from_json(ckpt.meta.at("vocab")));
  assign_parameters(ckpt, ep.parameters());
  return ep;
}

}  // namespace lexsimp
