#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lexsimp/adv_training.hpp"
#include "lexsimp/corpus.hpp"
#include "lexsimp/discriminator.hpp"
#include "lexsimp/edit_predictor.hpp"
#include "lexsimp/evaluation.hpp"
#include "lexsimp/filling.hpp"
#include "lexsimp/llm_oracle.hpp"

namespace lexsimp {

struct OracleSettings {
  std::string kind = "mock";  // "mock" or "http"
  double flip_rate = 0.1;
  HttpOracleConfig http;
  AnnotateOptions annotate;
};

// Everything a command needs. Loaded from one JSON file; CLI flags override.
struct RunConfig {
  std::uint64_t seed = 13;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> complex_path;
  std::optional<std::filesystem::path> simple_path;
  std::optional<std::filesystem::path> annotated_path;
  std::optional<std::filesystem::path> cache_path;

  ToyWorldSpec toy = default_toy_spec();
  EncoderConfig encoder;
  EncoderConfig filler_encoder;
  DiscriminatorTrainConfig disc_train;
  LossWeights weights;
  TrainSchedule schedule;
  FillerTrainConfig filler_train;
  OracleSettings oracle;
  double dev_fraction = 0.1;
  std::size_t top_k = 10;

  RunConfig();
  // Derives every component seed from `seed`.
  void apply_seed(std::uint64_t seed);
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

// Lexicon set of a toy world (the mock oracle's notion of "complex").
std::set<std::string> complex_lexicon_words(const ToyWorldSpec& spec);

// Held-out CWI scores of an editor against gold complex positions.
MetricReport editor_cwi_report(const EditPredictor& editor, const std::vector<AnnotatedInstance>& instances,
                               double threshold);

// Held-out CWI scores of the mock oracle's own verdicts.
MetricReport oracle_cwi_report(MockOracle& oracle, const std::vector<AnnotatedInstance>& instances);

// Shared stages of a toy run up to (and including) oracle annotation.
struct ToyStage {
  RunConfig config;
  ToyCorpus world;
  DevSplit split;
  Vocabulary vocab;
  std::optional<Discriminator> disc;
  DiscriminatorTrainResult disc_result;
  std::string checksum_before;
  EditorTrainData editor_data;
  double oracle_f1 = 0.0;
  double confident_complex = 0.0;  // held-out complex sentences with p_complex > 0.9
  double seconds = 0.0;
};

ToyStage prepare_toy_stage(const RunConfig& config, std::ostream* progress = nullptr);

struct EditorRun {
  std::optional<EditPredictor> editor;
  EditorTrainResult train;
  MetricReport heldout;
  double seconds = 0.0;
};

EditorRun run_toy_editor(const ToyStage& stage, const LossWeights& weights, std::ostream* jsonl = nullptr);

struct FillStage {
  std::optional<FillModel> filler;
  FillerTrainResult train;
  double seconds = 0.0;
};

FillStage run_toy_filler(const ToyStage& stage);

struct PipelineScores {
  double synonym_recovery = 0.0;  // planted slots whose final token is the gold synonym
  MetricReport cwi, sg, ls;
};

// Full simplification of held-out sentences plus CWI/SG/LS scoring.
PipelineScores score_pipeline(const EditPredictor& editor, const FillModel& filler,
                              const std::vector<AnnotatedInstance>& instances, std::size_t k, double threshold);

struct CriterionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// One "PASS|FAIL  name  detail" line per criterion.
std::string format_criteria(const std::vector<CriterionResult>& criteria);

struct ToyRunOptions {
  // Ablations to run next to the full model: any of "llm", "conf", "inv".
  std::set<std::string> ablations = {"llm", "conf", "inv"};
  std::ostream* progress = nullptr;
  // When set, per-run editor logs are written here as JSON lines.
  std::optional<std::filesystem::path> log_dir;
};

struct ToyRunSummary {
  double disc_dev_accuracy = 0.0;
  double confident_complex = 0.0;
  double oracle_f1 = 0.0;
  std::map<std::string, double> editor_f1;  // "full", "no_llm", "no_conf", "no_inv"
  PipelineScores scores;
  std::string checksum_before;
  std::string checksum_after;
  std::string editor_digest;  // full-model editor parameters
  std::string filler_digest;
  double seconds = 0.0;
  std::vector<CriterionResult> criteria;

  bool passed() const;
  nlohmann::json to_json() const;
};

// Ablation name to loss weights, starting from `full`.
LossWeights ablated_weights(const LossWeights& full, const std::string& ablation);

// The self-contained toy experiment: corpus, discriminator, mock annotation,
// editor (plus ablations), filler, simplification and scoring. The criteria
// cover the toy run, the ablation ordering (only when all three ablations
// ran) and the frozen-discriminator checksum.
ToyRunSummary run_toy_experiment(const RunConfig& config, const ToyRunOptions& options = {});

}  // namespace lexsimp
