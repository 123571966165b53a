#include <algorithm>
#include <limits>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexsimp/baselines.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

const SentenceTokens kShort{{"Much", "of", "the", "water", "diverted"}, true};

std::size_t syllable_oracle(const std::string& word) {
  const std::string w = to_lower(word);
  const std::regex group("[aeiou]+");
  const auto n = static_cast<std::size_t>(std::distance(std::sregex_iterator(w.begin(), w.end(), group),
                                                        std::sregex_iterator()));
  return std::max<std::size_t>(n, 1);
}

std::set<std::size_t> masks(const EditSequence& e) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e.is_mask(i)) out.insert(i);
  }
  return out;
}

bool subset(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

TEST_CASE("feature scores") {
  CHECK(feature_score("diverted", FeatureKind::CharacterLength) == 8);
  CHECK(feature_score("streams", FeatureKind::VowelCount) == 2);
  CHECK(feature_score("water", FeatureKind::SyllableCount) == 2);
  CHECK(feature_score("rhythm", FeatureKind::SyllableCount) == 1);
  for (const auto& w : testing::word_pool()) {
    CHECK(feature_score(w, FeatureKind::SyllableCount) == syllable_oracle(w));
    CHECK(feature_score(w, FeatureKind::VowelCount) ==
          std::count_if(w.begin(), w.end(), [](char c) { return std::string("aeiou").find(c) != std::string::npos; }));
    CHECK(feature_score(w, FeatureKind::CharacterLength) == w.size());
  }
  CHECK_THROWS_AS(feature_score("water", FeatureKind::CorpusFrequency), ConfigError);
  CHECK_THROWS_AS(feature_score("water", FeatureKind::Attention), ConfigError);
}

TEST_CASE("feature kind names") {
  for (auto k : {FeatureKind::CharacterLength, FeatureKind::SyllableCount, FeatureKind::VowelCount,
                 FeatureKind::CorpusFrequency, FeatureKind::Attention}) {
    CHECK(parse_feature_kind(to_string(k)) == k);
  }
  CHECK(parse_feature_kind("character") == FeatureKind::CharacterLength);
  CHECK(parse_feature_kind("frequency") == FeatureKind::CorpusFrequency);
  CHECK_THROWS_AS(parse_feature_kind("length"), ConfigError);
}

TEST_CASE("threshold examples") {
  CHECK(to_string(threshold_cwi(kShort, FeatureKind::CharacterLength, 8)) == "K K K K M");
  CHECK(threshold_cwi(kShort, FeatureKind::CharacterLength, std::numeric_limits<double>::infinity()).mask_count() == 0);
  const auto freq = FrequencyTable::build({kShort});
  const BaselineSources src{&freq, nullptr};
  CHECK(threshold_cwi(kShort, FeatureKind::CorpusFrequency, 0, src).mask_count() == 0);
  CHECK(threshold_cwi(SentenceTokens{{"zebra", "water"}, true}, FeatureKind::CorpusFrequency, 1, src).mask_count() == 1);
  CHECK(threshold_cwi(SentenceTokens{{"extraordinary", ",", "."}, true}, FeatureKind::CharacterLength, 0).mask_count() ==
        1);
  CHECK_THROWS_AS(threshold_cwi(kShort, FeatureKind::Attention, 0.5), ConfigError);
}

TEST_CASE("raising the threshold shrinks feature masks and grows frequency masks") {
  Rng rng(3);
  std::vector<SentenceTokens> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(testing::random_sentence(rng, 8));
  const auto freq = FrequencyTable::build(corpus);
  const BaselineSources src{&freq, nullptr};
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = testing::random_sentence(rng, 1 + rng.below(15));
    for (auto k : {FeatureKind::CharacterLength, FeatureKind::SyllableCount, FeatureKind::VowelCount}) {
      for (double t = 0; t < 12; t += 1) {
        CHECK(subset(masks(threshold_cwi(s, k, t + 1)), masks(threshold_cwi(s, k, t))));
      }
    }
    for (double t = 0; t < 40; t += 2) {
      CHECK(subset(masks(threshold_cwi(s, FeatureKind::CorpusFrequency, t, src)),
                   masks(threshold_cwi(s, FeatureKind::CorpusFrequency, t + 2, src))));
    }
  }
}

TEST_CASE("threshold tuning") {
  // Planted words are the only ones with eight or more letters; the rest have at most five.
  Rng rng(4);
  const std::vector<std::string> shorts{"the", "dog", "ran", "water", "old", "road", "tree", "bird", "house"};
  const std::vector<std::string> longs{"diverted", "purchased", "elaborate", "commenced", "terminated"};
  std::vector<AnnotatedInstance> dev;
  for (int i = 0; i < 40; ++i) {
    std::vector<std::string> toks;
    for (int j = 0; j < 6; ++j) toks.push_back(shorts[rng.below(shorts.size())]);
    const std::size_t at = rng.below(toks.size() + 1);
    toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(at), longs[rng.below(longs.size())]);
    toks.push_back(".");
    dev.push_back({{toks, true}, at, {"x"}});
  }
  std::vector<double> grid;
  for (int t = 1; t <= 12; ++t) grid.push_back(t);
  const double t = tune_threshold(dev, FeatureKind::CharacterLength, grid);
  CHECK(t >= 6);
  CHECK(t <= 8);
  CHECK(baseline_cwi_f1(dev, FeatureKind::CharacterLength, t) == 1.0);
  CHECK(tune_threshold(dev, FeatureKind::CharacterLength, {5}) == 5);
  CHECK_THROWS_AS(tune_threshold(dev, FeatureKind::CharacterLength, {}), ConfigError);

  // Argmax over the grid.
  double best = -1.0;
  for (double g : grid) best = std::max(best, baseline_cwi_f1(dev, FeatureKind::VowelCount, g));
  CHECK(baseline_cwi_f1(dev, FeatureKind::VowelCount, tune_threshold(dev, FeatureKind::VowelCount, grid)) == best);
}

TEST_CASE("attention baseline reads the discriminator") {
  Discriminator d(testing::tiny_encoder(6), testing::pool_vocabulary());
  d.mark_trained();
  const SentenceTokens s{{"the", "water", "ran", "."}, true};
  const auto att = d.attention_scores(s);
  const BaselineSources src{nullptr, &d};
  const auto e = threshold_cwi(s, FeatureKind::Attention, 0.0, src);
  CHECK(to_string(e) == "M M M K");
  const double top = *std::max_element(att.begin(), att.begin() + 3);
  const auto only = threshold_cwi(s, FeatureKind::Attention, top, src);
  CHECK(only.mask_count() >= 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(only.is_mask(i) == (att[i] >= top));
}
