#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lexsimp/baselines.hpp"
#include "lexsimp/checkpoint.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lexsimp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> lambda1, lambda2, lambda3, alpha, threshold;
};

RunConfig resolve_config(const GlobalFlags& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) c.apply_seed(*g.seed);
  if (g.out_dir) c.out_dir = *g.out_dir;
  if (g.lambda1) c.weights.lambda1 = *g.lambda1;
  if (g.lambda2) c.weights.lambda2 = *g.lambda2;
  if (g.lambda3) c.weights.lambda3 = *g.lambda3;
  if (g.alpha) c.weights.alpha = *g.alpha;
  if (g.threshold) c.schedule.threshold = *g.threshold;
  c.validate();
  return c;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

bool uses_toy(const RunConfig& c) { return !c.complex_path && !c.simple_path; }

void check_corpus_paths(const RunConfig& c) {
  if (uses_toy(c)) return;
  if (!c.complex_path || !c.simple_path) throw ConfigError("complex_path and simple_path must be given together");
  require_file(*c.complex_path, "complex corpus");
  require_file(*c.simple_path, "simple corpus");
}

// Corpus for training commands: the files when configured, else the toy world.
struct CorpusSource {
  NonParallelCorpus corpus;
  std::optional<ToyCorpus> toy;
};

CorpusSource load_corpus(const RunConfig& c) {
  CorpusSource src;
  if (uses_toy(c)) {
    src.toy = generate_toy_corpus(c.toy);
    src.corpus = src.toy->corpus;
  } else {
    src.corpus = load_nonparallel(*c.complex_path, *c.simple_path);
  }
  return src;
}

std::vector<AnnotatedInstance> annotated_set(const RunConfig& c, const std::optional<std::string>& flag) {
  if (flag) {
    require_file(*flag, "annotated set");
    return load_annotated(*flag);
  }
  if (c.annotated_path) {
    require_file(*c.annotated_path, "annotated set");
    return load_annotated(*c.annotated_path);
  }
  return generate_toy_corpus(c.toy).annotated;
}

fs::path disc_path(const RunConfig& c) { return c.out_dir / "discriminator.ckpt"; }
fs::path digest_path(const RunConfig& c) { return c.out_dir / "discriminator.sha256"; }
fs::path editor_path(const RunConfig& c) { return c.out_dir / "editor.ckpt"; }
fs::path filler_path(const RunConfig& c) { return c.out_dir / "filler.ckpt"; }

std::string read_digest(const fs::path& p) {
  std::ifstream in(p);
  std::string d;
  in >> d;
  return d;
}

int cmd_train_disc(const RunConfig& c) {
  check_corpus_paths(c);
  const auto src = load_corpus(c);
  const auto split = split_dev(src.corpus, c.dev_fraction, c.seed);
  const auto vocab = Vocabulary::build({&src.corpus.complex_sentences, &src.corpus.simple_sentences});
  Discriminator disc(c.encoder, vocab);
  const auto r = pretrain_discriminator(disc, split.train, split.dev, c.disc_train);
  disc.freeze();
  fs::create_directories(c.out_dir);
  disc.save(disc_path(c));
  std::ofstream(digest_path(c)) << disc.freeze_checksum() << "\n";
  std::cout << "dev accuracy " << r.dev_accuracy << " (best epoch " << r.best_epoch << ")\n";
  std::cout << "wrote " << disc_path(c).string() << "\n";
  return kExitOk;
}

int cmd_train_editor(const RunConfig& c) {
  check_corpus_paths(c);
  require_file(disc_path(c), "discriminator checkpoint");
  require_file(digest_path(c), "discriminator digest");
  if (c.oracle.kind == "mock" && !uses_toy(c)) {
    throw ConfigError("the mock oracle only knows the toy lexicon; use oracle kind http or the toy world");
  }
  const std::string digest = read_digest(digest_path(c));
  Discriminator disc = Discriminator::load(disc_path(c));
  disc.freeze();
  if (disc.freeze_checksum() != digest) throw StateError("discriminator checkpoint does not match its digest file");

  const auto src = load_corpus(c);
  const auto split = split_dev(src.corpus, c.dev_fraction, c.seed);
  std::unique_ptr<OracleEndpoint> client;
  if (c.oracle.kind == "mock") {
    client = std::make_unique<MockOracle>(complex_lexicon_words(c.toy), c.oracle.flip_rate, c.seed);
  } else {
    client = std::make_unique<HttpOracle>(c.oracle.http);
  }
  fs::create_directories(c.out_dir);
  OracleCache cache(c.cache_path.value_or(c.out_dir / "oracle_cache.jsonl"));
  EditorTrainData data;
  data.train = split.train.complex_sentences;
  data.dev = split.dev.complex_sentences;
  AnnotateStats stats;
  data.train_labels = annotate(data.train, client.get(), cache, c.oracle.annotate, &stats);
  data.dev_labels = annotate(data.dev, client.get(), cache, c.oracle.annotate, &stats);
  std::cout << "oracle: " << stats.cache_hits << " cached, " << stats.endpoint_calls << " calls, " << stats.unusable
            << " unusable\n";

  EditPredictor editor(c.encoder, disc.encoder().vocab());
  editor.encoder().load_weights_from(disc.encoder());
  std::ofstream log(c.out_dir / "editor_log.jsonl");
  const auto r = train_editor(editor, disc, data, c.weights, c.schedule, &log);
  if (r.discriminator_checksum != digest) throw StateError("discriminator checksum changed during editor training");
  editor.save(editor_path(c));
  std::cout << "best dev F1 " << r.best_dev_f1 << " (epoch " << r.best_epoch << " of " << r.epochs_run << ")\n";
  if (src.toy) {
    std::cout << "held-out CWI F1 " << editor_cwi_report(editor, src.toy->annotated, c.schedule.threshold).score.f1
              << "\n";
  }
  std::cout << "wrote " << editor_path(c).string() << "\n";
  return kExitOk;
}

int cmd_train_filler(const RunConfig& c) {
  check_corpus_paths(c);
  const auto src = load_corpus(c);
  const auto split = split_dev(src.corpus, c.dev_fraction, c.seed);
  FillModel filler(c.filler_encoder, fill_vocabulary(src.corpus));
  const auto pairs = mine_fill_pairs(split.train.complex_sentences, split.train.simple_sentences);
  const auto r = train_filler(filler, pairs, c.filler_train);
  fs::create_directories(c.out_dir);
  filler.save(filler_path(c));
  std::cout << "final epoch loss " << r.epoch_loss.back() << "\n";
  std::cout << "wrote " << filler_path(c).string() << "\n";
  return kExitOk;
}

struct SimplifyFlags {
  std::optional<std::string> input;
  std::optional<std::string> annotated;
  std::optional<std::string> output;
  bool force_gold = false;
};

int cmd_simplify(const RunConfig& c, const SimplifyFlags& f) {
  if (f.input.has_value() == f.annotated.has_value()) throw ConfigError("give exactly one of --input or --annotated");
  if (f.force_gold && !f.annotated) throw ConfigError("--force-gold needs --annotated");
  if (f.input) require_file(*f.input, "input file");
  if (f.annotated) require_file(*f.annotated, "annotated set");
  require_file(filler_path(c), "filler checkpoint");
  if (!f.force_gold) require_file(editor_path(c), "editor checkpoint");

  const FillModel filler = FillModel::load(filler_path(c));
  std::optional<EditPredictor> editor;
  if (!f.force_gold) editor.emplace(EditPredictor::load(editor_path(c)));

  std::ofstream file;
  if (f.output) file.open(*f.output);
  std::ostream& out = f.output ? file : std::cout;
  if (f.input) {
    for (const auto& s : load_sentences(*f.input).sentences) {
      out << simplify_sentence(s, *editor, filler, c.top_k, c.schedule.threshold).to_json().dump() << "\n";
    }
  } else {
    for (const auto& inst : load_annotated(*f.annotated)) {
      if (f.force_gold) {
        auto edits = EditSequence::all_keep(inst.sentence.size());
        edits.labels[inst.complex_index] = Edit::Mask;
        out << fill_edits(inst.sentence, edits, filler, c.top_k).to_json().dump() << "\n";
      } else {
        out << simplify_sentence(inst.sentence, *editor, filler, c.top_k, c.schedule.threshold).to_json().dump()
            << "\n";
      }
    }
  }
  return kExitOk;
}

struct EvaluateFlags {
  std::string predictions;
  std::optional<std::string> annotated;
  std::string task = "all";
  bool micro = false;
  bool json = false;
};

int cmd_evaluate(const RunConfig& c, const EvaluateFlags& f) {
  if (f.task != "all" && f.task != "cwi" && f.task != "sg" && f.task != "ls") {
    throw ConfigError("task must be cwi, sg, ls or all");
  }
  require_file(f.predictions, "predictions file");
  const auto instances = annotated_set(c, f.annotated);

  std::vector<SimplificationResult> preds;
  std::ifstream in(f.predictions);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      preds.push_back(SimplificationResult::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(f.predictions + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  if (preds.size() != instances.size()) {
    throw FormatError("predictions hold " + std::to_string(preds.size()) + " records for " +
                      std::to_string(instances.size()) + " annotated instances");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].original.tokens != instances[i].sentence.tokens) {
      throw FormatError("prediction " + std::to_string(i + 1) + " does not match its annotated sentence");
    }
  }

  // CWI and LS use the first record of each distinct sentence; SG reads the
  // candidates at each instance's gold position.
  std::vector<PositionSet> cwi_pred, cwi_gold;
  std::vector<LsPrediction> ls_pred;
  std::vector<LsGold> ls_gold;
  std::vector<std::vector<std::string>> sg_pred, sg_gold;
  std::map<std::string, std::size_t> first;
  std::vector<std::size_t> group_of(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto [it, fresh] = first.try_emplace(instances[i].sentence.text(), cwi_gold.size());
    if (fresh) {
      PositionSet p;
      LsPrediction lp;
      for (const auto& m : preds[i].candidates) {
        p.insert(m.position);
        lp.emplace_back(m.position, preds[i].final_sentence[m.position]);
      }
      cwi_pred.push_back(std::move(p));
      ls_pred.push_back(std::move(lp));
      cwi_gold.emplace_back();
      ls_gold.emplace_back();
    }
    cwi_gold[it->second].insert(instances[i].complex_index);
    ls_gold[it->second][instances[i].complex_index] = instances[i].gold_substitutions;

    std::vector<std::string> words;
    for (const auto& m : preds[i].candidates) {
      if (m.position != instances[i].complex_index) continue;
      for (const auto& [w, s] : m.candidates) words.push_back(w);
    }
    sg_pred.push_back(std::move(words));
    sg_gold.push_back(instances[i].gold_substitutions);
  }

  ReportTable table;
  const std::string dataset = f.annotated ? fs::path(*f.annotated).stem().string()
                              : c.annotated_path ? c.annotated_path->stem().string()
                                                 : "toy";
  const std::string system = fs::path(f.predictions).stem().string();
  if (f.task == "all" || f.task == "cwi") table.add(system, dataset, "cwi", cwi_metrics(cwi_pred, cwi_gold, f.micro).score);
  if (f.task == "all" || f.task == "sg") table.add(system, dataset, "sg", sg_metrics(sg_pred, sg_gold, f.micro).score);
  if (f.task == "all" || f.task == "ls") table.add(system, dataset, "ls", ls_metrics(ls_pred, ls_gold, f.micro).score);
  std::cout << (f.json ? report_json(table).dump(2) + "\n" : format_report(table));
  return kExitOk;
}

struct BaselineFlags {
  std::string kind;
  std::optional<std::string> annotated;
  std::optional<std::string> input;
  std::optional<std::string> output;
  std::optional<double> threshold;
  bool tune = false;
  std::vector<double> grid;
};

std::vector<double> default_grid(FeatureKind kind) {
  std::vector<double> g;
  switch (kind) {
    case FeatureKind::CharacterLength:
      for (int t = 1; t <= 20; ++t) g.push_back(t);
      break;
    case FeatureKind::SyllableCount:
    case FeatureKind::VowelCount:
      for (int t = 1; t <= 10; ++t) g.push_back(t);
      break;
    case FeatureKind::CorpusFrequency:
      g = {1, 2, 3, 5, 10, 20, 30, 50, 100, 200, 300, 500, 1000, 2000};
      break;
    case FeatureKind::Attention:
      for (int t = 1; t <= 20; ++t) g.push_back(0.025 * t);
      break;
  }
  return g;
}

int cmd_baseline(const RunConfig& c, const BaselineFlags& f) {
  const FeatureKind kind = parse_feature_kind(f.kind);
  if (f.threshold.has_value() == f.tune) throw ConfigError("give exactly one of --threshold or --tune");
  if (f.input && f.annotated) throw ConfigError("give at most one of --input or --annotated");
  if (f.input && f.tune) throw ConfigError("--tune needs an annotated set");
  if (f.input) require_file(*f.input, "input file");

  BaselineSources sources;
  std::optional<FrequencyTable> freq;
  std::optional<Discriminator> disc;
  if (kind == FeatureKind::CorpusFrequency) {
    check_corpus_paths(c);
    freq = FrequencyTable::build(load_corpus(c).corpus.simple_sentences);
    sources.freq = &*freq;
  }
  if (kind == FeatureKind::Attention) {
    require_file(disc_path(c), "discriminator checkpoint");
    disc.emplace(Discriminator::load(disc_path(c)));
    sources.disc = &*disc;
  }

  std::vector<AnnotatedInstance> instances;
  std::vector<SentenceTokens> sentences;
  if (f.input) {
    sentences = load_sentences(*f.input).sentences;
  } else {
    instances = annotated_set(c, f.annotated);
    for (const auto& inst : instances) sentences.push_back(inst.sentence);
  }
  const double t = f.tune ? tune_threshold(instances, kind, f.grid.empty() ? default_grid(kind) : f.grid, sources)
                          : *f.threshold;

  std::ofstream file;
  if (f.output) file.open(*f.output);
  for (const auto& s : sentences) {
    const auto edits = to_string(threshold_cwi(s, kind, t, sources));
    if (f.output) {
      file << edits << "\n";
    } else {
      std::cout << edits << "\n";
    }
  }
  std::ostream& summary = f.output ? std::cout : std::cerr;
  summary << to_string(kind) << " threshold " << t << (f.tune ? " (tuned)" : "");
  if (!instances.empty()) summary << " CWI F1 " << baseline_cwi_f1(instances, kind, t, sources);
  summary << "\n";
  return kExitOk;
}

int cmd_toy_run(const RunConfig& c, const std::string& ablate) {
  ToyRunOptions opts;
  if (ablate == "all") {
    opts.ablations = {"llm", "conf", "inv"};
  } else if (ablate == "none") {
    opts.ablations.clear();
  } else {
    ablated_weights(c.weights, ablate);
    opts.ablations = {ablate};
  }
  opts.progress = &std::cout;
  opts.log_dir = c.out_dir / "logs";
  const auto summary = run_toy_experiment(c, opts);
  auto j = summary.to_json();
  j["config"] = c.to_json();
  fs::create_directories(c.out_dir);
  std::ofstream(c.out_dir / "toy_summary.json") << j.dump(2) << "\n";
  std::cout << "\n" << format_criteria(summary.criteria);
  if (ablate != "all" && ablate != "none") {
    const double full = summary.editor_f1.at("full");
    const double other = summary.editor_f1.at("no_" + ablate);
    std::cout << "w/o-" << ablate << " F1 " << other << (other < full ? " < " : " >= ") << "full " << full << "\n";
  }
  return summary.passed() ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lexical simplification by adversarial editing with LLM pseudo labels"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out-dir", g.out_dir, "output directory");
  app.add_option("--lambda1", g.lambda1, "confusion loss weight");
  app.add_option("--lambda2", g.lambda2, "invariance loss weight");
  app.add_option("--lambda3", g.lambda3, "LLM loss weight");
  app.add_option("--alpha", g.alpha, "unconfident target score");
  app.add_option("--threshold", g.threshold, "keep-probability decode threshold");

  auto* train_disc = app.add_subcommand("train-disc", "pretrain and freeze the style discriminator");
  auto* train_editor_cmd = app.add_subcommand("train-editor", "train the edit predictor");
  auto* train_filler_cmd = app.add_subcommand("train-filler", "train the toy filling model");

  SimplifyFlags sf;
  auto* simplify = app.add_subcommand("simplify", "simplify sentences, one JSON record per line");
  simplify->add_option("--input", sf.input, "sentence file, one per line");
  simplify->add_option("--annotated", sf.annotated, "annotated TSV; one record per instance");
  simplify->add_option("--output", sf.output, "output file (default stdout)");
  simplify->add_flag("--force-gold", sf.force_gold, "mask the gold complex word instead of predicting edits");

  EvaluateFlags ef;
  auto* evaluate = app.add_subcommand("evaluate", "score simplify output against an annotated set");
  evaluate->add_option("--predictions", ef.predictions, "simplify output (JSON lines)")->required();
  evaluate->add_option("--annotated", ef.annotated, "annotated TSV (default: config, else toy held-out)");
  evaluate->add_option("--task", ef.task, "cwi, sg, ls or all");
  evaluate->add_flag("--micro", ef.micro, "micro instead of macro averaging");
  evaluate->add_flag("--json", ef.json, "print JSON");

  BaselineFlags bf;
  auto* baseline = app.add_subcommand("baseline", "feature-threshold CWI baseline");
  baseline->add_option("--kind", bf.kind, "character, syllable, vowel, frequency or attention")->required();
  baseline->add_option("--annotated", bf.annotated, "annotated TSV (default: config, else toy held-out)");
  baseline->add_option("--input", bf.input, "sentence file to label instead of an annotated set");
  baseline->add_option("--output", bf.output, "edit sequences, one line per sentence (default stdout)");
  baseline->add_option("--threshold", bf.threshold, "feature threshold");
  baseline->add_flag("--tune", bf.tune, "pick the best-F1 threshold on the annotated set");
  baseline->add_option("--grid", bf.grid, "thresholds tried by --tune")->delimiter(',');

  std::string ablate = "all";
  auto* toy = app.add_subcommand("toy-run", "end-to-end toy experiment with acceptance checks");
  toy->add_option("--ablate", ablate, "llm, conf, inv, all or none");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const RunConfig c = resolve_config(g);
    if (*train_disc) return cmd_train_disc(c);
    if (*train_editor_cmd) return cmd_train_editor(c);
    if (*train_filler_cmd) return cmd_train_filler(c);
    if (*simplify) return cmd_simplify(c, sf);
    if (*evaluate) return cmd_evaluate(c, ef);
    if (*baseline) return cmd_baseline(c, bf);
    if (*toy) return cmd_toy_run(c, ablate);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
