#include "lexsimp/baselines.hpp"

#include <cctype>

#include "lexsimp/errors.hpp"
#include "lexsimp/evaluation.hpp"

namespace lexsimp {

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

}  // namespace

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::CharacterLength: return "character_length";
    case FeatureKind::SyllableCount: return "syllable_count";
    case FeatureKind::VowelCount: return "vowel_count";
    case FeatureKind::CorpusFrequency: return "corpus_frequency";
    case FeatureKind::Attention: return "attention";
  }
  return "unknown";
}

FeatureKind parse_feature_kind(const std::string& name) {
  if (name == "character_length" || name == "character") return FeatureKind::CharacterLength;
  if (name == "syllable_count" || name == "syllable") return FeatureKind::SyllableCount;
  if (name == "vowel_count" || name == "vowel") return FeatureKind::VowelCount;
  if (name == "corpus_frequency" || name == "frequency") return FeatureKind::CorpusFrequency;
  if (name == "attention") return FeatureKind::Attention;
  throw ConfigError("unknown feature kind: " + name);
}

FrequencyTable FrequencyTable::build(const std::vector<SentenceTokens>& sentences) {
  FrequencyTable t;
  for (const auto& s : sentences) {
    for (const auto& w : s.tokens) t.add(w);
  }
  return t;
}

std::size_t FrequencyTable::count(const std::string& word) const {
  auto it = counts_.find(to_lower(word));
  return it == counts_.end() ? 0 : it->second;
}

double feature_score(const std::string& word, FeatureKind kind, const FrequencyTable* freq) {
  const std::string w = to_lower(word);
  switch (kind) {
    case FeatureKind::CharacterLength: {
      std::size_t n = 0;
      for (char c : w) n += std::isalpha(static_cast<unsigned char>(c)) != 0;
      return static_cast<double>(n);
    }
    case FeatureKind::VowelCount: {
      std::size_t n = 0;
      for (char c : w) n += is_vowel(c);
      return static_cast<double>(n);
    }
    case FeatureKind::SyllableCount: {
      std::size_t groups = 0;
      bool in_group = false;
      for (char c : w) {
        const bool v = is_vowel(c);
        if (v && !in_group) ++groups;
        in_group = v;
      }
      return static_cast<double>(std::max<std::size_t>(groups, 1));
    }
    case FeatureKind::CorpusFrequency:
      if (!freq) throw ConfigError("corpus frequency scores need a frequency table");
      return static_cast<double>(freq->count(w));
    case FeatureKind::Attention:
      throw ConfigError("attention scores depend on the sentence; use threshold_cwi");
  }
  return 0.0;
}

EditSequence threshold_cwi(const SentenceTokens& sentence, FeatureKind kind, double threshold,
                           const BaselineSources& sources) {
  EditSequence out = EditSequence::all_keep(sentence.size());
  std::vector<double> attention;
  if (kind == FeatureKind::Attention) {
    if (!sources.disc) throw ConfigError("the attention baseline needs a discriminator");
    attention = sources.disc->attention_scores(sentence);
  }
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (is_punctuation(sentence[i])) continue;
    bool mask = false;
    if (kind == FeatureKind::Attention) {
      mask = attention[i] >= threshold;
    } else if (kind == FeatureKind::CorpusFrequency) {
      mask = feature_score(sentence[i], kind, sources.freq) < threshold;
    } else {
      mask = feature_score(sentence[i], kind) >= threshold;
    }
    if (mask) out.labels[i] = Edit::Mask;
  }
  return out;
}

double baseline_cwi_f1(const std::vector<AnnotatedInstance>& instances, FeatureKind kind, double threshold,
                       const BaselineSources& sources) {
  const auto gold_sentences = group_by_sentence(instances);
  std::vector<PositionSet> preds, gold;
  for (const auto& g : gold_sentences) {
    const auto edits = threshold_cwi(g.sentence, kind, threshold, sources);
    PositionSet p;
    for (std::size_t i = 0; i < edits.size(); ++i) {
      if (edits.is_mask(i)) p.insert(i);
    }
    preds.push_back(std::move(p));
    gold.emplace_back(g.positions.begin(), g.positions.end());
  }
  return cwi_metrics(preds, gold).score.f1;
}

double tune_threshold(const std::vector<AnnotatedInstance>& instances, FeatureKind kind,
                      const std::vector<double>& grid, const BaselineSources& sources) {
  if (grid.empty()) throw ConfigError("threshold grid is empty");
  double best_t = grid.front();
  double best_f1 = -1.0;
  for (double t : grid) {
    const double f1 = baseline_cwi_f1(instances, kind, t, sources);
    if (f1 > best_f1 || (f1 == best_f1 && t < best_t)) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace lexsimp
