#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lexsimp/corpus.hpp"
#include "lexsimp/discriminator.hpp"
#include "lexsimp/edit_predictor.hpp"

namespace lexsimp {

enum class FeatureKind { CharacterLength, SyllableCount, VowelCount, CorpusFrequency, Attention };

std::string to_string(FeatureKind kind);
// Accepts character_length, syllable_count, vowel_count, corpus_frequency,
// attention and the short names character, syllable, vowel, frequency.
FeatureKind parse_feature_kind(const std::string& name);

class FrequencyTable {
 public:
  static FrequencyTable build(const std::vector<SentenceTokens>& sentences);
  void add(const std::string& word, std::size_t n = 1) { counts_[to_lower(word)] += n; }
  std::size_t count(const std::string& word) const;
  std::size_t size() const { return counts_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> counts_;
};

// Word-level score. Corpus frequency needs `freq`; attention is sentence
// dependent and is not available here.
double feature_score(const std::string& word, FeatureKind kind, const FrequencyTable* freq = nullptr);

struct BaselineSources {
  const FrequencyTable* freq = nullptr;
  const Discriminator* disc = nullptr;
};

// Frequency: M iff count < threshold. Every other kind: M iff score >= threshold.
// Punctuation is always K.
EditSequence threshold_cwi(const SentenceTokens& sentence, FeatureKind kind, double threshold,
                           const BaselineSources& sources = {});

// Argmax-F1 threshold over `grid` on the annotated instances; ties go to the
// smallest threshold.
double tune_threshold(const std::vector<AnnotatedInstance>& instances, FeatureKind kind,
                      const std::vector<double>& grid, const BaselineSources& sources = {});

// Macro CWI F1 of a baseline on annotated instances (merged per sentence).
double baseline_cwi_f1(const std::vector<AnnotatedInstance>& instances, FeatureKind kind, double threshold,
                       const BaselineSources& sources = {});

}  // namespace lexsimp
