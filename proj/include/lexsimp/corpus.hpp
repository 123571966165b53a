#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lexsimp {

// Reserved symbols shared by every vocabulary in the project.
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kUnkToken = "[UNK]";

// Word-level token sequence. The sentence-start marker is implicit: it is not
// stored in `tokens`, `has_cls` records whether encoders prepend it.
struct SentenceTokens {
  std::vector<std::string> tokens;
  bool has_cls = true;

  std::size_t size() const { return tokens.size(); }
  const std::string& operator[](std::size_t i) const { return tokens[i]; }
  std::string text() const;

  friend bool operator==(const SentenceTokens&, const SentenceTokens&) = default;
};

// Validates the invariants (non-empty, no empty token).
SentenceTokens make_sentence(std::vector<std::string> tokens, bool has_cls = true);

// Lowercases ASCII letters and splits on whitespace. Returns an empty
// sequence for blank lines; callers decide whether that is an error.
std::vector<std::string> tokenize(std::string_view line);

std::string to_lower(std::string_view word);
bool is_punctuation(std::string_view token);
bool is_valid_utf8(std::string_view bytes);

struct NonParallelCorpus {
  std::vector<SentenceTokens> complex_sentences;  // style s_x
  std::vector<SentenceTokens> simple_sentences;   // style s_y
  // Blank or non-UTF-8 lines dropped while loading.
  std::size_t skipped_lines = 0;
};

struct AnnotatedInstance {
  SentenceTokens sentence;
  std::size_t complex_index = 0;
  std::vector<std::string> gold_substitutions;  // best first

  const std::string& complex_word() const { return sentence[complex_index]; }
};

struct SentenceFile {
  std::vector<SentenceTokens> sentences;
  std::size_t skipped_lines = 0;
};

SentenceFile load_sentences(const std::filesystem::path& path);
void save_sentences(const std::filesystem::path& path, const std::vector<SentenceTokens>& sentences);

NonParallelCorpus load_nonparallel(const std::filesystem::path& complex_path,
                                   const std::filesystem::path& simple_path);

// One instance per TSV line: sentence, 0-based index, complex word, rank:word...
AnnotatedInstance parse_annotated_line(std::string_view line, std::size_t line_number);
std::string format_annotated_line(const AnnotatedInstance& instance);
std::vector<AnnotatedInstance> load_annotated(const std::filesystem::path& path);
void save_annotated(const std::filesystem::path& path, const std::vector<AnnotatedInstance>& instances);

// Gold view of an annotated set with instances sharing a sentence merged.
struct GoldSentence {
  SentenceTokens sentence;
  std::vector<std::size_t> positions;                   // ascending
  std::vector<std::vector<std::string>> substitutions;  // parallel to positions
};
std::vector<GoldSentence> group_by_sentence(const std::vector<AnnotatedInstance>& instances);

struct DevSplit {
  NonParallelCorpus train;
  NonParallelCorpus dev;
};

// Per side, round(fraction * size) sentences go to dev. Deterministic in seed.
DevSplit split_dev(const NonParallelCorpus& corpus, double fraction, std::uint64_t seed);

struct ToyWorldSpec {
  std::size_t vocab_size = 400;  // background filler words
  std::vector<std::pair<std::string, std::string>> complex_lexicon;  // complex -> simple
  // Skeletons: "_" is a complex-word slot, "*" a filler slot, anything else literal.
  std::vector<std::string> templates;
  std::uint64_t seed = 13;
  std::size_t sentences_per_side = 2000;
  std::size_t held_out_sentences = 400;
  std::size_t cue_words_per_pair = 3;
  double cue_rate = 0.7;
  double filler_zipf = 1.0;
  double lexicon_zipf = 0.7;
};

ToyWorldSpec default_toy_spec();
ToyWorldSpec load_toy_spec(const std::filesystem::path& path);
void validate_toy_spec(const ToyWorldSpec& spec);

struct ToyCorpus {
  NonParallelCorpus corpus;
  // Held-out complex-style sentences, one instance per planted word.
  std::vector<AnnotatedInstance> annotated;
  std::vector<std::string> filler_words;
};

ToyCorpus generate_toy_corpus(const ToyWorldSpec& spec);

}  // namespace lexsimp
