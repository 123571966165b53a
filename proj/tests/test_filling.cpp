#include <string>
#include <vector>

#include "doctest.h"
#include "lexsimp/errors.hpp"
#include "lexsimp/filling.hpp"
#include "lexsimp/rng.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

const SentenceTokens kWater{{"much", "of", "the", "water", "carried", "by", "these", "streams", "is", "diverted", "."},
                            true};

EditSequence mask_at(std::size_t n, const std::vector<std::size_t>& positions) {
  auto e = EditSequence::all_keep(n);
  for (auto p : positions) e.labels[p] = Edit::Mask;
  return e;
}

// Complex sentences say "diverted" or "purchased"; the simple side says "moved" or "bought".
struct SmallWorld {
  NonParallelCorpus corpus;
  std::vector<FillPair> pairs;
};

SmallWorld small_world() {
  SmallWorld w;
  const std::vector<std::vector<std::string>> frames = {
      {"the", "water", "is", "_", "."},       {"much", "of", "the", "river", "was", "_", "."},
      {"the", "old", "road", "is", "_", "."}, {"a", "stream", "was", "_", "by", "the", "town", "."},
      {"the", "light", "is", "_", "."},       {"the", "stone", "was", "_", "here", "."}};
  const std::vector<std::pair<std::string, std::string>> lexicon = {{"diverted", "moved"}, {"purchased", "bought"}};
  for (const auto& f : frames) {
    for (const auto& [hard, easy] : lexicon) {
      auto c = f, s = f;
      for (auto& t : c) if (t == "_") t = hard;
      for (auto& t : s) if (t == "_") t = easy;
      w.corpus.complex_sentences.push_back({c, true});
      w.corpus.simple_sentences.push_back({s, true});
      w.pairs.push_back({{c, true}, {s, true}});
    }
  }
  return w;
}

FillModel trained_filler(std::uint64_t seed = 3) {
  const auto w = small_world();
  auto cfg = testing::tiny_encoder(seed);
  cfg.width = 16;
  cfg.ffn_width = 32;
  FillModel m(cfg, fill_vocabulary(w.corpus));
  FillerTrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  tc.seed = seed;
  train_filler(m, w.pairs, tc);
  return m;
}

}  // namespace

TEST_CASE("fill input layout on the water example") {
  const auto masked = apply_edits(kWater, mask_at(kWater.size(), {9}));
  const auto in = build_fill_input(kWater, masked);
  REQUIRE(in.sequence.size() == 1 + 11 + 1 + 8 + 11 + 1);
  CHECK(in.sequence.front() == kClsToken);
  CHECK(in.sequence[12] == kSepToken);
  CHECK(in.sequence.back() == kSepToken);
  const std::vector<std::string> instruction(in.sequence.begin() + 13, in.sequence.begin() + 21);
  CHECK(instruction ==
        std::vector<std::string>{"The", "simpler", "version", "of", "the", "previous", "sentence", "is:"});
  CHECK(in.masked_offset == 21);
  CHECK(in.mask_positions == std::vector<std::size_t>{30});
  CHECK(in.sequence[30] == kMaskToken);
  for (std::size_t i = 1; i <= 11; ++i) CHECK(in.sequence[i] == kWater[i - 1]);
  REQUIRE(in.types.size() == in.sequence.size());
  for (std::size_t i = 0; i < in.types.size(); ++i) CHECK(in.types[i] == (i < 13 ? 0 : 1));
}

TEST_CASE("fill input with no masks and with two masks") {
  const auto none = build_fill_input(kWater, kWater);
  CHECK(none.mask_positions.empty());
  const auto two = build_fill_input(kWater, apply_edits(kWater, mask_at(kWater.size(), {7, 3})));
  CHECK(two.mask_positions == std::vector<std::size_t>{24, 28});
  CHECK_THROWS_AS(build_fill_input(kWater, SentenceTokens{{"much"}, true}), ShapeError);
}

TEST_CASE("candidate filter") {
  const CandidateList raw{{"diverted", 0.4}, {"diverts", 0.2}, {"moved", 0.1}, {"Moved", 0.05}, {"re-do", 0.04},
                          {"m\xc3\xb6ved", 0.03}, {"[MASK]", 0.02}, {"sent", 0.01}};
  const auto out = filter_candidates(raw, "diverted");
  REQUIRE(out.size() == 2);
  CHECK(out[0].first == "moved");
  CHECK(out[0].second == 0.1);
  CHECK(out[1].first == "sent");
  const auto cl = filter_candidates({{"classified", 0.5}, {"classify", 0.3}, {"categorized", 0.2}}, "classified");
  REQUIRE(cl.size() == 1);
  CHECK(cl[0].first == "categorized");
  CHECK(filter_candidates({}, "x").empty());
}

TEST_CASE("learns the substitution and ranks candidates") {
  const auto m = trained_filler();
  const SentenceTokens s{{"the", "water", "is", "diverted", "."}, true};
  const auto in = build_fill_input(s, apply_edits(s, mask_at(5, {3})));
  for (std::size_t k : {1, 3, 10}) {
    const auto lists = m.predict_candidates(in, k, {"diverted"});
    REQUIRE(lists.size() == 1);
    CHECK(lists[0].size() <= k);
    for (std::size_t i = 1; i < lists[0].size(); ++i) CHECK(lists[0][i].second <= lists[0][i - 1].second);
    for (const auto& [w, p] : lists[0]) CHECK(w != "diverted");
  }
  const auto top = m.predict_candidates(in, 10, {"diverted"});
  REQUIRE_FALSE(top[0].empty());
  CHECK(top[0].front().first == "moved");
  CHECK_THROWS_AS(m.predict_candidates(in, 0, {"diverted"}), ConfigError);
  CHECK_THROWS_AS(m.predict_candidates(in, 3, {}), ShapeError);
}

TEST_CASE("filling only rewrites masked positions") {
  const auto m = trained_filler();
  Rng rng(4);
  const auto w = small_world();
  for (const auto& s : w.corpus.complex_sentences) {
    auto e = EditSequence::all_keep(s.size());
    for (auto& l : e.labels) l = rng.bernoulli(0.3) ? Edit::Mask : Edit::Keep;
    const auto r = fill_edits(s, e, m, 5);
    REQUIRE(r.final_sentence.size() == s.size());
    CHECK(r.candidates.size() == e.mask_count());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!e.is_mask(i)) CHECK(r.final_sentence[i] == s[i]);
    }
    for (const auto& c : r.candidates) {
      CHECK(c.complex_word == s[c.position]);
      if (!c.candidates.empty()) CHECK(r.final_sentence[c.position] == c.candidates.front().first);
    }
    const auto back = SimplificationResult::from_json(r.to_json());
    CHECK(back.final_sentence == r.final_sentence);
    CHECK(back.edits == r.edits);
  }
}

TEST_CASE("no masks returns the sentence unchanged") {
  const auto w = small_world();
  FillModel m(testing::tiny_encoder(), fill_vocabulary(w.corpus));
  const auto r = fill_edits(kWater, EditSequence::all_keep(kWater.size()), m, 10);
  CHECK(r.final_sentence == kWater);
  CHECK(r.candidates.empty());
}

TEST_CASE("training and prediction are deterministic for a seed") {
  const auto a = trained_filler(9);
  const auto b = trained_filler(9);
  const SentenceTokens s{{"the", "light", "is", "purchased", "."}, true};
  const auto in = build_fill_input(s, apply_edits(s, mask_at(5, {3})));
  const auto ca = a.predict_candidates(in, 10, {"purchased"});
  const auto cb = b.predict_candidates(in, 10, {"purchased"});
  CHECK(ca == cb);
}

TEST_CASE("checkpoint round-trip keeps predictions") {
  testing::TempDir dir("filler");
  const auto m = trained_filler(5);
  m.save(dir / "filler.ckpt");
  const auto back = FillModel::load(dir / "filler.ckpt");
  const auto in = build_fill_input(kWater, apply_edits(kWater, mask_at(kWater.size(), {9})));
  CHECK(back.predict_raw(in, 5) == m.predict_raw(in, 5));
}
