#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lexsimp/filling.hpp"
#include "lexsimp/pipeline.hpp"
#include "support/test_support.hpp"

using namespace lexsimp;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args`; stderr is merged into the output when `merge` is set.
Result run(const std::string& args, bool merge = true) {
  const std::string cmd = std::string(LEXSIMP_CLI) + " " + args + (merge ? " 2>&1" : " 2>/dev/null");
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Shared output directory for the train / simplify / evaluate sequence.
testing::TempDir& workdir() {
  static testing::TempDir dir("cli");
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
  CHECK(run("").code == 1);
  CHECK(run("no-such-command").code == 1);
  CHECK(run("toy-run --ablate everything").code == 1);
  CHECK(run("--out-dir " + quoted(workdir().path()) + " simplify").code == 1);
  CHECK(run("baseline --kind length --threshold 3").code == 1);
}

TEST_CASE("missing corpus path is reported with its path") {
  testing::TempDir dir("cli_missing");
  const auto missing = dir / "absent_complex.txt";
  testing::write_file(dir / "simple.txt", "the dog ran .\n");
  testing::write_file(dir / "run.json",
                      nlohmann::json{{"complex_path", missing.string()}, {"simple_path", (dir / "simple.txt").string()}}
                          .dump());
  const auto r = run("--config " + quoted(dir / "run.json") + " --out-dir " + quoted(dir.path()) + " train-disc");
  CHECK(r.code != 0);
  CHECK(r.out.find(missing.string()) != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "discriminator.ckpt"));
}

TEST_CASE("train-disc on the toy world is accurate and deterministic") {
  testing::TempDir other("cli_rerun");
  const auto a = run("--out-dir " + quoted(workdir().path()) + " train-disc");
  const auto b = run("--out-dir " + quoted(other.path()) + " train-disc");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto first = lines(a.out).front();
  CHECK(first == lines(b.out).front());
  REQUIRE(first.rfind("dev accuracy ", 0) == 0);
  CHECK(std::stod(first.substr(13)) >= 0.95);
  CHECK(testing::read_file(workdir() / "discriminator.sha256") == testing::read_file(other / "discriminator.sha256"));
}

TEST_CASE("train-editor keeps the discriminator digest") {
  const auto before = testing::read_file(workdir() / "discriminator.sha256");
  const auto r = run("--out-dir " + quoted(workdir().path()) + " train-editor");
  REQUIRE(r.code == 0);
  CHECK(testing::read_file(workdir() / "discriminator.sha256") == before);
  CHECK(std::filesystem::exists(workdir() / "editor.ckpt"));
  CHECK_FALSE(lines(testing::read_file(workdir() / "editor_log.jsonl")).empty());
  CHECK(r.out.find("held-out CWI F1") != std::string::npos);
}

TEST_CASE("simplify and evaluate") {
  // A small untrained filler keeps this test fast; training it is covered elsewhere.
  const auto toy = generate_toy_corpus(default_toy_spec());
  FillModel filler(testing::tiny_encoder(), fill_vocabulary(toy.corpus));
  filler.save(workdir() / "filler.ckpt");
  const std::string base = "--out-dir " + quoted(workdir().path()) + " ";

  SUBCASE("empty input gives empty output") {
    testing::write_file(workdir() / "empty.txt", "");
    const auto r = run(base + "simplify --input " + quoted(workdir() / "empty.txt"), false);
    CHECK(r.code == 0);
    CHECK(r.out.empty());
  }

  SUBCASE("one record per input sentence, in order") {
    std::vector<SentenceTokens> sentences(toy.corpus.complex_sentences.begin(),
                                          toy.corpus.complex_sentences.begin() + 100);
    save_sentences(workdir() / "hundred.txt", sentences);
    const auto r = run(base + "simplify --input " + quoted(workdir() / "hundred.txt"), false);
    REQUIRE(r.code == 0);
    const auto records = lines(r.out);
    REQUIRE(records.size() == 100);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto rec = SimplificationResult::from_json(nlohmann::json::parse(records[i]));
      CHECK(rec.original == sentences[i]);
    }
  }

  SUBCASE("gold masking on the water example fills the masked word") {
    testing::write_file(workdir() / "water.tsv",
                        "much of the water carried by these streams is diverted .\t9\tdiverted\t1:moved\n");
    const auto r = run(base + "simplify --force-gold --annotated " + quoted(workdir() / "water.tsv"), false);
    REQUIRE(r.code == 0);
    const auto rec = SimplificationResult::from_json(nlohmann::json::parse(lines(r.out).at(0)));
    CHECK(rec.masked[9] == kMaskToken);
    CHECK(rec.edits.mask_count() == 1);
    REQUIRE(rec.candidates.size() == 1);
    REQUIRE_FALSE(rec.candidates[0].candidates.empty());
    CHECK(rec.final_sentence[9] == rec.candidates[0].candidates.front().first);
    CHECK(rec.final_sentence[9] != "diverted");
  }

  SUBCASE("evaluate scores aligned predictions and rejects misaligned ones") {
    save_annotated(workdir() / "heldout.tsv", toy.annotated);
    const auto preds = workdir() / "preds.jsonl";
    REQUIRE(run(base + "simplify --annotated " + quoted(workdir() / "heldout.tsv") + " --output " + quoted(preds))
                .code == 0);
    const auto r = run(base + "evaluate --json --predictions " + quoted(preds) + " --annotated " +
                       quoted(workdir() / "heldout.tsv"), false);
    REQUIRE(r.code == 0);
    const auto report = nlohmann::json::parse(r.out);
    REQUIRE(report.size() == 3);
    for (const auto& row : report) {
      CHECK(row["f1"].get<double>() >= 0.0);
      CHECK(row["f1"].get<double>() <= 1.0);
    }
    auto recs = lines(testing::read_file(preds));
    recs.pop_back();
    std::string cut;
    for (const auto& l : recs) cut += l + "\n";
    testing::write_file(workdir() / "short.jsonl", cut);
    const auto bad = run(base + "evaluate --predictions " + quoted(workdir() / "short.jsonl") + " --annotated " +
                         quoted(workdir() / "heldout.tsv"));
    CHECK(bad.code == 2);
  }
}

TEST_CASE("baseline labels an input file") {
  testing::TempDir dir("cli_baseline");
  testing::write_file(dir / "in.txt", "Much of the water diverted\n");
  const auto r = run("baseline --kind character --threshold 8 --input " + quoted(dir / "in.txt"), false);
  CHECK(r.code == 0);
  CHECK(r.out == "K K K K M\n");
}
