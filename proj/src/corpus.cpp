#include "lexsimp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

std::string SentenceTokens::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

SentenceTokens make_sentence(std::vector<std::string> tokens, bool has_cls) {
  if (tokens.empty()) throw FormatError("sentence must contain at least one token");
  for (const auto& t : tokens) {
    if (t.empty()) throw FormatError("sentence contains an empty token");
  }
  return SentenceTokens{std::move(tokens), has_cls};
}

std::string to_lower(std::string_view word) {
  std::string out(word);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(to_lower(line.substr(i, j - i)));
    i = j;
  }
  return out;
}

bool is_punctuation(std::string_view token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u);
  });
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong encodings, surrogates and out-of-range code points.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000)) return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

SentenceFile load_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open corpus file: " + path.string());
  SentenceFile file;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!is_valid_utf8(line)) {
      ++file.skipped_lines;
      continue;
    }
    auto tokens = tokenize(line);
    if (tokens.empty()) {
      ++file.skipped_lines;
      continue;
    }
    file.sentences.push_back(SentenceTokens{std::move(tokens), true});
  }
  return file;
}

void save_sentences(const std::filesystem::path& path, const std::vector<SentenceTokens>& sentences) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write file: " + path.string());
  for (const auto& s : sentences) out << s.text() << '\n';
}

NonParallelCorpus load_nonparallel(const std::filesystem::path& complex_path,
                                   const std::filesystem::path& simple_path) {
  auto complex_file = load_sentences(complex_path);
  auto simple_file = load_sentences(simple_path);
  if (complex_file.sentences.empty()) throw EmptyCorpusError("no usable sentences in " + complex_path.string());
  if (simple_file.sentences.empty()) throw EmptyCorpusError("no usable sentences in " + simple_path.string());
  NonParallelCorpus corpus;
  corpus.complex_sentences = std::move(complex_file.sentences);
  corpus.simple_sentences = std::move(simple_file.sentences);
  corpus.skipped_lines = complex_file.skipped_lines + simple_file.skipped_lines;
  return corpus;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

[[noreturn]] void format_fail(std::size_t line_number, const std::string& why) {
  throw FormatError("annotated line " + std::to_string(line_number) + ": " + why);
}

}  // namespace

AnnotatedInstance parse_annotated_line(std::string_view line, std::size_t line_number) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split_tabs(line);
  if (fields.size() < 4) format_fail(line_number, "expected sentence, index, word and at least one rank:word");
  auto tokens = tokenize(fields[0]);
  if (tokens.empty()) format_fail(line_number, "empty sentence");
  std::size_t index = 0;
  const auto idx_field = fields[1];
  auto [ptr, ec] = std::from_chars(idx_field.data(), idx_field.data() + idx_field.size(), index);
  if (ec != std::errc() || ptr != idx_field.data() + idx_field.size()) format_fail(line_number, "bad complex index");
  if (index >= tokens.size()) format_fail(line_number, "complex index beyond sentence length");
  const std::string word = to_lower(fields[2]);
  if (tokens[index] != word) {
    format_fail(line_number, "complex word '" + word + "' not found at index " + std::to_string(index));
  }
  std::vector<std::pair<long, std::string>> ranked;
  for (std::size_t f = 3; f < fields.size(); ++f) {
    const auto field = fields[f];
    if (field.empty()) continue;
    const auto colon = field.find(':');
    if (colon == std::string_view::npos) format_fail(line_number, "substitution without rank");
    long rank = 0;
    auto [p2, ec2] = std::from_chars(field.data(), field.data() + colon, rank);
    if (ec2 != std::errc() || p2 != field.data() + colon) format_fail(line_number, "bad substitution rank");
    std::string sub = to_lower(field.substr(colon + 1));
    if (sub.empty() || sub.find(' ') != std::string::npos) format_fail(line_number, "substitution must be one word");
    ranked.emplace_back(rank, std::move(sub));
  }
  if (ranked.empty()) format_fail(line_number, "no gold substitutions");
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  AnnotatedInstance inst;
  inst.sentence = SentenceTokens{std::move(tokens), true};
  inst.complex_index = index;
  for (auto& r : ranked) inst.gold_substitutions.push_back(std::move(r.second));
  return inst;
}

std::string format_annotated_line(const AnnotatedInstance& instance) {
  std::string out = instance.sentence.text();
  out += '\t' + std::to_string(instance.complex_index);
  out += '\t' + instance.complex_word();
  for (std::size_t r = 0; r < instance.gold_substitutions.size(); ++r) {
    out += '\t' + std::to_string(r + 1) + ':' + instance.gold_substitutions[r];
  }
  return out;
}

std::vector<AnnotatedInstance> load_annotated(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open annotated file: " + path.string());
  std::vector<AnnotatedInstance> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (tokenize(line).empty()) continue;
    out.push_back(parse_annotated_line(line, number));
  }
  return out;
}

void save_annotated(const std::filesystem::path& path, const std::vector<AnnotatedInstance>& instances) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write file: " + path.string());
  for (const auto& inst : instances) out << format_annotated_line(inst) << '\n';
}

std::vector<GoldSentence> group_by_sentence(const std::vector<AnnotatedInstance>& instances) {
  std::vector<GoldSentence> out;
  for (const auto& inst : instances) {
    if (out.empty() || out.back().sentence.tokens != inst.sentence.tokens) {
      out.push_back(GoldSentence{inst.sentence, {}, {}});
    }
    auto& g = out.back();
    auto it = std::lower_bound(g.positions.begin(), g.positions.end(), inst.complex_index);
    const auto at = it - g.positions.begin();
    if (it != g.positions.end() && *it == inst.complex_index) {
      for (const auto& w : inst.gold_substitutions) g.substitutions[at].push_back(w);
      continue;
    }
    g.positions.insert(it, inst.complex_index);
    g.substitutions.insert(g.substitutions.begin() + at, inst.gold_substitutions);
  }
  return out;
}

namespace {

std::pair<std::vector<SentenceTokens>, std::vector<SentenceTokens>> split_side(
    const std::vector<SentenceTokens>& side, double fraction, Rng& rng, const char* name) {
  const auto dev_count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(side.size())));
  if (dev_count < 1 || dev_count >= side.size()) {
    throw SplitError(std::string("corpus too small to split ") + name + " side (" + std::to_string(side.size()) +
                     " sentences at fraction " + std::to_string(fraction) + ")");
  }
  std::vector<std::size_t> order(side.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<bool> in_dev(side.size(), false);
  for (std::size_t i = 0; i < dev_count; ++i) in_dev[order[i]] = true;
  std::vector<SentenceTokens> train, dev;
  for (std::size_t i = 0; i < side.size(); ++i) (in_dev[i] ? dev : train).push_back(side[i]);
  return {std::move(train), std::move(dev)};
}

}  // namespace

DevSplit split_dev(const NonParallelCorpus& corpus, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw SplitError("dev fraction must lie in (0, 1)");
  Rng complex_rng(mix_seed(seed, 101));
  Rng simple_rng(mix_seed(seed, 102));
  auto [ctrain, cdev] = split_side(corpus.complex_sentences, fraction, complex_rng, "complex");
  auto [strain, sdev] = split_side(corpus.simple_sentences, fraction, simple_rng, "simple");
  DevSplit split;
  split.train.complex_sentences = std::move(ctrain);
  split.train.simple_sentences = std::move(strain);
  split.dev.complex_sentences = std::move(cdev);
  split.dev.simple_sentences = std::move(sdev);
  return split;
}

ToyWorldSpec default_toy_spec() {
  ToyWorldSpec spec;
  spec.complex_lexicon = {
      {"utilize", "use"},        {"commence", "start"},       {"terminate", "end"},       {"endeavor", "try"},
      {"purchase", "buy"},       {"assist", "help"},          {"obtain", "get"},          {"demonstrate", "show"},
      {"construct", "build"},    {"inquire", "ask"},          {"sufficient", "enough"},   {"numerous", "many"},
      {"approximately", "about"}, {"facilitate", "ease"},     {"subsequently", "later"},  {"residence", "home"},
      {"observe", "see"},        {"require", "need"},         {"comprehend", "grasp"},    {"diminish", "shrink"},
      {"accumulate", "gather"},  {"consume", "eat"},          {"reside", "live"},         {"prohibit", "ban"},
      {"initiate", "begin"},     {"modify", "change"},        {"inform", "tell"},         {"additional", "extra"},
      {"frequently", "often"},   {"nevertheless", "still"},
  };
  spec.templates = {
      "the * will _ the * .",
      "we _ the * in the * .",
      "a * can _ the * of the * .",
      "she said the * must _ * .",
      "they _ * every * .",
      "in the * , the * _ a * .",
      "our * _ * before the * .",
      "the * and the * _ the * .",
      "he would _ a * with his * .",
      "it is * to _ the * .",
      "some * _ the * at * .",
      "the * _ * and then _ the * .",
      "you should _ the * and _ * .",
      "all * in the * _ * .",
      "people _ the * because the * is * .",
      "this * was _ by the * .",
      "i _ that * every day .",
      "the old * _ the new * .",
  };
  return spec;
}

void validate_toy_spec(const ToyWorldSpec& spec) {
  if (spec.complex_lexicon.empty()) throw GenerationError("toy lexicon is empty");
  if (spec.templates.empty()) throw GenerationError("toy spec has no templates");
  std::set<std::string> complex_words, simple_words;
  for (const auto& [c, s] : spec.complex_lexicon) {
    if (c.empty() || s.empty()) throw GenerationError("empty lexicon entry");
    if (!complex_words.insert(c).second) throw GenerationError("complex word listed twice: " + c);
    simple_words.insert(s);
  }
  for (const auto& s : simple_words) {
    if (complex_words.count(s)) throw GenerationError("word is both complex and simple: " + s);
  }
  for (const auto& t : spec.templates) {
    const auto tokens = tokenize(t);
    const auto slots = static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), "_"));
    if (slots == 0 || slots > spec.complex_lexicon.size()) {
      throw GenerationError("template slot count mismatch (" + std::to_string(slots) + " slots, " +
                            std::to_string(spec.complex_lexicon.size()) + " lexicon entries): " + t);
    }
  }
  if (spec.cue_rate > 0.0 && spec.vocab_size < spec.cue_words_per_pair * spec.complex_lexicon.size() + 1) {
    throw GenerationError("vocab_size too small for the requested cue words");
  }
  if (spec.vocab_size == 0) throw GenerationError("vocab_size must be positive");
}

namespace {

std::vector<std::string> make_filler_words(std::size_t count, const std::set<std::string>& reserved, Rng& rng) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::vector<std::string> words;
  std::unordered_set<std::string> seen;
  while (words.size() < count) {
    const std::size_t syllables = 1 + rng.below(3);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.below(consonants.size())];
      w += vowels[rng.below(vowels.size())];
    }
    if (rng.bernoulli(0.4)) w += consonants[rng.below(consonants.size())];
    if (w.size() < 2 || reserved.count(w) || !seen.insert(w).second) continue;
    words.push_back(std::move(w));
  }
  return words;
}

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
  return w;
}

struct Planted {
  std::vector<std::string> complex_tokens;
  std::vector<std::string> simple_tokens;
  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (position, lexicon index)
};

class ToyGenerator {
 public:
  ToyGenerator(const ToyWorldSpec& spec, std::vector<std::string> fillers)
      : spec_(spec), fillers_(std::move(fillers)) {
    const std::size_t n_pairs = spec.complex_lexicon.size();
    const std::size_t n_cues = spec.cue_rate > 0.0 ? spec.cue_words_per_pair : 0;
    cues_.resize(n_pairs);
    // Cue words come from the rank order after the most frequent fillers so
    // they stay distinct from the background distribution.
    std::size_t next = 0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      for (std::size_t k = 0; k < n_cues; ++k) cues_[p].push_back(fillers_[next++]);
    }
    background_.assign(fillers_.begin() + static_cast<std::ptrdiff_t>(next), fillers_.end());
    background_weights_ = zipf_weights(background_.size(), spec.filler_zipf);
    pair_weights_ = zipf_weights(n_pairs, spec.lexicon_zipf);
    for (const auto& t : spec.templates) templates_.push_back(tokenize(t));
  }

  Planted sample(Rng& rng) const {
    const auto& tmpl = templates_[rng.below(templates_.size())];
    const auto slots = static_cast<std::size_t>(std::count(tmpl.begin(), tmpl.end(), "_"));
    std::vector<std::size_t> pairs;
    auto weights = pair_weights_;
    for (std::size_t s = 0; s < slots; ++s) {
      const std::size_t p = rng.categorical(weights);
      weights[p] = 0.0;
      pairs.push_back(p);
    }
    Planted out;
    std::size_t slot = 0;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
      const auto& tok = tmpl[i];
      if (tok == "_") {
        const auto& [c, s] = spec_.complex_lexicon[pairs[slot]];
        out.complex_tokens.push_back(c);
        out.simple_tokens.push_back(s);
        out.slots.emplace_back(i, pairs[slot]);
        ++slot;
      } else if (tok == "*") {
        std::string w;
        const auto& cue_set = cues_[pairs[rng.below(pairs.size())]];
        if (!cue_set.empty() && rng.bernoulli(spec_.cue_rate)) {
          w = cue_set[rng.below(cue_set.size())];
        } else {
          w = background_[rng.categorical(background_weights_)];
        }
        out.complex_tokens.push_back(w);
        out.simple_tokens.push_back(w);
      } else {
        out.complex_tokens.push_back(tok);
        out.simple_tokens.push_back(tok);
      }
    }
    return out;
  }

 private:
  const ToyWorldSpec& spec_;
  std::vector<std::string> fillers_;
  std::vector<std::vector<std::string>> cues_;
  std::vector<std::string> background_;
  std::vector<double> background_weights_;
  std::vector<double> pair_weights_;
  std::vector<std::vector<std::string>> templates_;
};

}  // namespace

ToyCorpus generate_toy_corpus(const ToyWorldSpec& spec) {
  validate_toy_spec(spec);
  std::set<std::string> reserved;
  for (const auto& [c, s] : spec.complex_lexicon) {
    reserved.insert(c);
    reserved.insert(s);
  }
  for (const auto& t : spec.templates) {
    for (auto& tok : tokenize(t)) reserved.insert(tok);
  }
  Rng word_rng(mix_seed(spec.seed, 0));
  ToyCorpus out;
  out.filler_words = make_filler_words(spec.vocab_size, reserved, word_rng);
  ToyGenerator gen(spec, out.filler_words);

  Rng complex_rng(mix_seed(spec.seed, 1));
  Rng simple_rng(mix_seed(spec.seed, 2));
  Rng held_rng(mix_seed(spec.seed, 3));
  for (std::size_t i = 0; i < spec.sentences_per_side; ++i) {
    out.corpus.complex_sentences.push_back(SentenceTokens{gen.sample(complex_rng).complex_tokens, true});
  }
  for (std::size_t i = 0; i < spec.sentences_per_side; ++i) {
    out.corpus.simple_sentences.push_back(SentenceTokens{gen.sample(simple_rng).simple_tokens, true});
  }
  for (std::size_t i = 0; i < spec.held_out_sentences; ++i) {
    const auto planted = gen.sample(held_rng);
    SentenceTokens sentence{planted.complex_tokens, true};
    for (const auto& [pos, pair] : planted.slots) {
      out.annotated.push_back(AnnotatedInstance{sentence, pos, {spec.complex_lexicon[pair].second}});
    }
  }
  return out;
}

ToyWorldSpec load_toy_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open toy spec: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("toy spec " + path.string() + ": " + e.what());
  }
  ToyWorldSpec spec = default_toy_spec();
  try {
    if (j.contains("vocab_size")) spec.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("templates")) spec.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("lexicon")) {
      spec.complex_lexicon.clear();
      for (const auto& entry : j.at("lexicon")) {
        const auto text = entry.get<std::string>();
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw FormatError("lexicon entry must be complex=simple: " + text);
        spec.complex_lexicon.emplace_back(to_lower(text.substr(0, eq)), to_lower(text.substr(eq + 1)));
      }
    }
    if (j.contains("sentences_per_side")) spec.sentences_per_side = j.at("sentences_per_side").get<std::size_t>();
    if (j.contains("held_out_sentences")) spec.held_out_sentences = j.at("held_out_sentences").get<std::size_t>();
    if (j.contains("cue_words_per_pair")) spec.cue_words_per_pair = j.at("cue_words_per_pair").get<std::size_t>();
    if (j.contains("cue_rate")) spec.cue_rate = j.at("cue_rate").get<double>();
    if (j.contains("filler_zipf")) spec.filler_zipf = j.at("filler_zipf").get<double>();
    if (j.contains("lexicon_zipf")) spec.lexicon_zipf = j.at("lexicon_zipf").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("toy spec " + path.string() + ": " + e.what());
  }
  validate_toy_spec(spec);
  return spec;
}

}  // namespace lexsimp
