#include "lexsimp/filling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lexsimp/checkpoint.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/optim.hpp"
#include "lexsimp/rng.hpp"
#include "lexsimp/stemmer.hpp"

namespace lexsimp {

namespace {

std::vector<std::string> instruction_tokens() {
  std::vector<std::string> out;
  std::string cur;
  for (char c : kFillInstruction) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_spaces(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

bool is_plain_word(const std::string& w) {
  if (w.empty()) return false;
  for (char c : w) {
    if (c < 'a' || c > 'z') return false;
  }
  return true;
}

}  // namespace

FillInput build_fill_input(const SentenceTokens& original, const SentenceTokens& masked) {
  if (original.size() != masked.size()) {
    throw ShapeError("original and masked sentences differ in length (" + std::to_string(original.size()) + " vs " +
                     std::to_string(masked.size()) + ")");
  }
  FillInput in;
  in.sequence.push_back(std::string(kClsToken));
  for (const auto& t : original.tokens) in.sequence.push_back(t);
  in.sequence.push_back(std::string(kSepToken));
  in.types.assign(in.sequence.size(), 0);
  for (auto& t : instruction_tokens()) in.sequence.push_back(std::move(t));
  in.masked_offset = in.sequence.size();
  for (std::size_t i = 0; i < masked.size(); ++i) {
    if (masked[i] == kMaskToken) in.mask_positions.push_back(in.sequence.size());
    in.sequence.push_back(masked[i]);
  }
  in.sequence.push_back(std::string(kSepToken));
  in.types.resize(in.sequence.size(), 1);
  return in;
}

CandidateList filter_candidates(const CandidateList& raw, const std::string& complex_word) {
  const std::string cw = to_lower(complex_word);
  const std::string cstem = porter_stem(cw);
  CandidateList out;
  std::unordered_set<std::string> seen;
  for (const auto& [word, score] : raw) {
    const std::string w = to_lower(word);
    if (!is_plain_word(w)) continue;
    if (w == cw || porter_stem(w) == cstem) continue;
    if (!seen.insert(w).second) continue;
    out.emplace_back(w, score);
  }
  return out;
}

std::vector<FillPair> mine_fill_pairs(const std::vector<SentenceTokens>& complex_side,
                                      const std::vector<SentenceTokens>& simple_side) {
  if (complex_side.empty()) throw EmptyCorpusError("no complex sentences to pair with");
  // Token sets as sorted id vectors for fast intersection.
  std::unordered_map<std::string, int> ids;
  auto to_set = [&](const SentenceTokens& s) {
    std::vector<int> v;
    for (const auto& t : s.tokens) v.push_back(ids.try_emplace(t, static_cast<int>(ids.size())).first->second);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  std::vector<std::vector<int>> csets, ssets;
  csets.reserve(complex_side.size());
  ssets.reserve(simple_side.size());
  for (const auto& s : complex_side) csets.push_back(to_set(s));
  for (const auto& s : simple_side) ssets.push_back(to_set(s));

  std::vector<double> df(ids.size(), 0.0);
  for (const auto* sets : {&csets, &ssets}) {
    for (const auto& set : *sets) {
      for (int id : set) df[static_cast<std::size_t>(id)] += 1.0;
    }
  }
  const double n = static_cast<double>(csets.size() + ssets.size());
  std::vector<double> idf(ids.size());
  for (std::size_t k = 0; k < idf.size(); ++k) idf[k] = std::log(n / df[k]);
  auto mass = [&](const std::vector<int>& set) {
    double m = 0.0;
    for (int id : set) m += idf[static_cast<std::size_t>(id)];
    return m;
  };
  std::vector<double> cmass;
  cmass.reserve(csets.size());
  for (const auto& c : csets) cmass.push_back(mass(c));

  std::vector<FillPair> pairs;
  pairs.reserve(simple_side.size());
  for (std::size_t si = 0; si < ssets.size(); ++si) {
    const auto& sset = ssets[si];
    const double smass = mass(sset);
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < csets.size(); ++i) {
      const auto& c = csets[i];
      double inter = 0.0;
      auto a = sset.begin();
      auto b = c.begin();
      while (a != sset.end() && b != c.end()) {
        if (*a < *b) {
          ++a;
        } else if (*b < *a) {
          ++b;
        } else {
          inter += idf[static_cast<std::size_t>(*a)];
          ++a;
          ++b;
        }
      }
      const double uni = smass + cmass[i] - inter;
      const double j = uni > 0.0 ? inter / uni : 0.0;
      if (j > best) {
        best = j;
        best_i = i;
      }
    }
    pairs.push_back({complex_side[best_i], simple_side[si]});
  }
  return pairs;
}

Vocabulary fill_vocabulary(const NonParallelCorpus& corpus) {
  return Vocabulary::build({&corpus.complex_sentences, &corpus.simple_sentences}, instruction_tokens());
}

FillModel::FillModel(const EncoderConfig& config, Vocabulary vocab) : encoder_(config, std::move(vocab), "filler.encoder") {
  Rng rng(mix_seed(config.seed, 51));
  const int v = encoder_.vocab().size();
  out_w_.name = "filler.out.w";
  out_w_.value = nn::Matrix(config.width, v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.width));
  for (Eigen::Index i = 0; i < out_w_.value.size(); ++i) out_w_.value.data()[i] = rng.normal() * scale;
  out_b_.name = "filler.out.b";
  out_b_.value = nn::Matrix::Zero(1, v);
}

nn::Var FillModel::forward(nn::Tape& tape, const FillInput& input, const std::vector<std::size_t>& rows,
                           bool train_mode, Rng* rng) const {
  std::vector<int> ids;
  ids.reserve(input.sequence.size());
  for (const auto& t : input.sequence) ids.push_back(encoder_.vocab().id(t));
  // Position ids restart at the second segment, so a masked-sentence token and
  // its counterpart in the original sit a fixed distance apart.
  std::vector<int> positions(ids.size());
  int restart = -1;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (input.types[i] == 1 && restart < 0) restart = static_cast<int>(i);
    positions[i] = restart < 0 ? static_cast<int>(i) : static_cast<int>(i) - restart;
  }
  auto enc = encoder_.encode(tape, encoder_.embed_ids(tape, ids, input.types, std::nullopt, &positions), train_mode,
                             rng);
  std::vector<nn::Var> picked;
  for (auto r : rows) picked.push_back(tape.slice_rows(enc.states, static_cast<int>(r), 1));
  nn::Var h = picked.size() == 1 ? picked.front() : tape.concat_rows(picked);
  return tape.log_softmax_rows(tape.add_row(tape.matmul(h, tape.param(out_w_)), tape.param(out_b_)));
}

std::vector<CandidateList> FillModel::predict_raw(const FillInput& input, std::size_t k) const {
  std::vector<CandidateList> out;
  if (input.mask_positions.empty()) return out;
  nn::Tape tape;
  const auto& lp = tape.value(forward(tape, input, input.mask_positions, false, nullptr));
  const int v = static_cast<int>(lp.cols());
  for (Eigen::Index r = 0; r < lp.rows(); ++r) {
    std::vector<int> order(static_cast<std::size_t>(v));
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min<std::size_t>(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](int a, int b) { return lp(r, a) > lp(r, b) || (lp(r, a) == lp(r, b) && a < b); });
    CandidateList list;
    for (std::size_t i = 0; i < take; ++i) list.emplace_back(vocab().word(order[i]), std::exp(lp(r, order[i])));
    out.push_back(std::move(list));
  }
  return out;
}

std::vector<CandidateList> FillModel::predict_candidates(const FillInput& input, std::size_t k,
                                                         const std::vector<std::string>& complex_words) const {
  if (k < 1) throw ConfigError("candidate count must be at least 1");
  if (complex_words.size() != input.mask_positions.size()) {
    throw ShapeError("one complex word is needed per mask position");
  }
  // Rank the whole vocabulary, then filter; the filter may drop any prefix.
  auto raw = predict_raw(input, static_cast<std::size_t>(vocab().size()));
  std::vector<CandidateList> out;
  for (std::size_t m = 0; m < raw.size(); ++m) {
    auto filtered = filter_candidates(raw[m], complex_words[m]);
    if (filtered.size() > k) filtered.resize(k);
    out.push_back(std::move(filtered));
  }
  return out;
}

std::vector<nn::Parameter*> FillModel::parameters() {
  auto ps = encoder_.parameters();
  ps.push_back(&out_w_);
  ps.push_back(&out_b_);
  return ps;
}

std::vector<const nn::Parameter*> FillModel::parameters() const {
  auto ps = const_cast<FillModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void FillModel::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["kind"] = "filler";
  meta["encoder"] = encoder_.config().to_json();
  meta["vocab"] = encoder_.vocab().to_json();
  write_checkpoint(path, meta, parameters());
}

FillModel FillModel::load(const std::filesystem::path& path) {
  const auto ckpt = read_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "filler") throw FormatError("not a filling-model checkpoint: " + path.string());
  FillModel m(EncoderConfig::from_json(ckpt.meta.at("encoder")), Vocabulary::from_json(ckpt.meta.at("vocab")));
  assign_parameters(ckpt, m.parameters());
  return m;
}

FillerTrainResult train_filler(FillModel& model, const std::vector<FillPair>& pairs, const FillerTrainConfig& config) {
  if (pairs.empty()) throw EmptyCorpusError("no training pairs for the filling model");
  if (config.epochs < 1 || config.batch_size < 1) throw ConfigError("invalid filler schedule");
  if (!(config.min_mask_rate > 0.0 && config.min_mask_rate <= config.max_mask_rate && config.max_mask_rate < 1.0)) {
    throw ConfigError("invalid filler mask rates");
  }
  Adam adam(model.parameters(), AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.clip_norm});
  Rng rng(mix_seed(config.seed, 61));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  nn::GradBuffer grads;
  FillerTrainResult result;
  const int v = model.vocab().size();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grads.clear();
      for (std::size_t k = start; k < end; ++k) {
        const FillPair& pair = pairs[order[k]];
        const std::size_t n = pair.simple.size();
        const double rate = config.min_mask_rate + rng.uniform() * (config.max_mask_rate - config.min_mask_rate);
        const std::size_t count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(rate * static_cast<double>(n))));
        // Positions where an equal-length pair disagrees come first: they are
        // where the simple side substitutes something.
        std::vector<std::size_t> differ, same;
        for (std::size_t i = 0; i < n; ++i) {
          const bool d = pair.complex.size() == n && pair.complex[i] != pair.simple[i];
          (d ? differ : same).push_back(i);
        }
        rng.shuffle(differ);
        rng.shuffle(same);
        std::vector<std::size_t> pos = differ;
        pos.insert(pos.end(), same.begin(), same.end());
        pos.resize(std::min(count, n));
        std::sort(pos.begin(), pos.end());
        SentenceTokens masked = pair.simple;
        for (auto p : pos) masked.tokens[p] = std::string(kMaskToken);
        // The complex sentence may differ in length; the original segment is
        // laid out directly rather than through build_fill_input.
        FillInput in;
        in.sequence.push_back(std::string(kClsToken));
        for (const auto& t : pair.complex.tokens) in.sequence.push_back(t);
        in.sequence.push_back(std::string(kSepToken));
        in.types.assign(in.sequence.size(), 0);
        for (auto& t : instruction_tokens()) in.sequence.push_back(std::move(t));
        in.masked_offset = in.sequence.size();
        for (const auto& t : masked.tokens) in.sequence.push_back(t);
        in.sequence.push_back(std::string(kSepToken));
        in.types.resize(in.sequence.size(), 1);
        std::vector<std::size_t> rows;
        for (auto p : pos) rows.push_back(in.masked_offset + p);
        if (static_cast<int>(in.sequence.size()) > model.encoder().config().max_len) {
          throw TruncationError("fill training sequence exceeds max length");
        }

        nn::Tape tape(&grads);
        nn::Var lp = model.forward(tape, in, rows, true, &rng);
        nn::Matrix w = nn::Matrix::Zero(static_cast<Eigen::Index>(rows.size()), v);
        for (std::size_t r = 0; r < pos.size(); ++r) {
          w(static_cast<Eigen::Index>(r), model.vocab().id(pair.simple[pos[r]])) = -1.0 / static_cast<double>(pos.size());
        }
        nn::Var loss = tape.weighted_sum(lp, w);
        const double lv = tape.scalar(loss);
        if (!std::isfinite(lv)) throw TrainingError("filling-model loss diverged at epoch " + std::to_string(epoch));
        epoch_loss += lv;
        tape.backward(loss);
      }
      adam.step(grads, 1.0 / static_cast<double>(end - start));
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(pairs.size()));
  }
  return result;
}

nlohmann::json SimplificationResult::to_json() const {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& m : candidates) {
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& [w, s] : m.candidates) ranked.push_back({w, s});
    cands.push_back({{"position", m.position}, {"complex_word", m.complex_word}, {"ranked", ranked}});
  }
  return {{"original", original.text()},
          {"edits", to_string(edits)},
          {"masked", masked.text()},
          {"candidates", cands},
          {"final", final_sentence.text()}};
}

SimplificationResult SimplificationResult::from_json(const nlohmann::json& j) {
  SimplificationResult r;
  try {
    r.original = SentenceTokens{split_spaces(j.at("original").get<std::string>()), true};
    r.edits = parse_edit_sequence(j.at("edits").get<std::string>());
    r.masked = SentenceTokens{split_spaces(j.at("masked").get<std::string>()), true};
    r.final_sentence = SentenceTokens{split_spaces(j.at("final").get<std::string>()), true};
    for (const auto& c : j.at("candidates")) {
      MaskCandidates m;
      m.position = c.at("position").get<std::size_t>();
      m.complex_word = c.at("complex_word").get<std::string>();
      for (const auto& pair : c.at("ranked")) m.candidates.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
      r.candidates.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed simplification record: ") + e.what());
  }
  return r;
}

SimplificationResult fill_edits(const SentenceTokens& sentence, const EditSequence& edits, const FillModel& filler,
                                std::size_t k) {
  SimplificationResult r;
  r.original = sentence;
  r.edits = edits;
  r.masked = apply_edits(sentence, edits);
  r.final_sentence = sentence;
  if (edits.mask_count() == 0) return r;
  const FillInput input = build_fill_input(sentence, r.masked);
  std::vector<std::string> complex_words;
  for (auto p : input.mask_positions) complex_words.push_back(sentence[p - input.masked_offset]);
  const auto lists = filler.predict_candidates(input, k, complex_words);
  for (std::size_t m = 0; m < lists.size(); ++m) {
    const std::size_t pos = input.mask_positions[m] - input.masked_offset;
    r.candidates.push_back({pos, sentence[pos], lists[m]});
    if (!lists[m].empty()) r.final_sentence.tokens[pos] = lists[m].front().first;
  }
  return r;
}

SimplificationResult simplify_sentence(const SentenceTokens& sentence, const EditPredictor& predictor,
                                       const FillModel& filler, std::size_t k, double threshold) {
  const auto edits = decode(predictor.predict_probs(sentence), sentence, threshold);
  return fill_edits(sentence, edits, filler, k);
}

}  // namespace lexsimp
