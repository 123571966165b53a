#include "lexsimp/pipeline.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>
#include <utility>
#include <fstream>
#include <memory>

#include "lexsimp/checkpoint.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

namespace {

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json toy_to_json(const ToyWorldSpec& t) {
  std::vector<std::string> lex;
  for (const auto& [c, s] : t.complex_lexicon) lex.push_back(c + "=" + s);
  return {{"vocab_size", t.vocab_size},
          {"seed", t.seed},
          {"lexicon", lex},
          {"templates", t.templates},
          {"sentences_per_side", t.sentences_per_side},
          {"held_out_sentences", t.held_out_sentences},
          {"cue_words_per_pair", t.cue_words_per_pair},
          {"cue_rate", t.cue_rate},
          {"filler_zipf", t.filler_zipf},
          {"lexicon_zipf", t.lexicon_zipf}};
}

ToyWorldSpec toy_from_json(const nlohmann::json& j, ToyWorldSpec t) {
  t.vocab_size = j.value("vocab_size", t.vocab_size);
  t.seed = j.value("seed", t.seed);
  if (j.contains("lexicon")) {
    t.complex_lexicon.clear();
    for (const auto& e : j.at("lexicon")) {
      const auto text = e.get<std::string>();
      const auto eq = text.find('=');
      if (eq == std::string::npos) throw ConfigError("lexicon entry must be complex=simple: " + text);
      t.complex_lexicon.emplace_back(to_lower(text.substr(0, eq)), to_lower(text.substr(eq + 1)));
    }
  }
  if (j.contains("templates")) t.templates = j.at("templates").get<std::vector<std::string>>();
  t.sentences_per_side = j.value("sentences_per_side", t.sentences_per_side);
  t.held_out_sentences = j.value("held_out_sentences", t.held_out_sentences);
  t.cue_words_per_pair = j.value("cue_words_per_pair", t.cue_words_per_pair);
  t.cue_rate = j.value("cue_rate", t.cue_rate);
  t.filler_zipf = j.value("filler_zipf", t.filler_zipf);
  t.lexicon_zipf = j.value("lexicon_zipf", t.lexicon_zipf);
  return t;
}

}  // namespace

RunConfig::RunConfig() {
  filler_encoder.width = 48;
  filler_encoder.ffn_width = 96;
  filler_encoder.max_len = 128;
  filler_train.epochs = 55;
  filler_train.learning_rate = 3e-3;
  apply_seed(seed);
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  toy.seed = mix_seed(s, 1);
  encoder.seed = mix_seed(s, 2);
  filler_encoder.seed = mix_seed(s, 3);
  disc_train.seed = mix_seed(s, 4);
  schedule.seed = mix_seed(s, 5);
  filler_train.seed = mix_seed(s, 6);
}

void RunConfig::validate() const {
  encoder.validate();
  filler_encoder.validate();
  weights.validate();
  schedule.validate();
  validate_toy_spec(toy);
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ConfigError("dev_fraction must lie in (0, 1)");
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (oracle.kind != "mock" && oracle.kind != "http") throw ConfigError("oracle kind must be mock or http");
  if (!(oracle.flip_rate >= 0.0 && oracle.flip_rate < 0.5)) throw ConfigError("flip_rate must lie in [0, 0.5)");
  if (oracle.annotate.retries < 0 || oracle.annotate.max_concurrency < 1) throw ConfigError("invalid annotate options");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir.string();
  if (complex_path) j["complex_path"] = complex_path->string();
  if (simple_path) j["simple_path"] = simple_path->string();
  if (annotated_path) j["annotated_path"] = annotated_path->string();
  if (cache_path) j["cache_path"] = cache_path->string();
  j["toy"] = toy_to_json(toy);
  j["encoder"] = encoder.to_json();
  j["filler_encoder"] = filler_encoder.to_json();
  j["discriminator"] = {{"epochs", disc_train.epochs},
                        {"batch_size", disc_train.batch_size},
                        {"learning_rate", disc_train.learning_rate},
                        {"clip_norm", disc_train.clip_norm},
                        {"soft_mask_rate", disc_train.soft_mask_rate},
                        {"seed", disc_train.seed}};
  j["weights"] = weights.to_json();
  j["schedule"] = schedule.to_json();
  j["filler"] = {{"epochs", filler_train.epochs},
                 {"batch_size", filler_train.batch_size},
                 {"learning_rate", filler_train.learning_rate},
                 {"clip_norm", filler_train.clip_norm},
                 {"min_mask_rate", filler_train.min_mask_rate},
                 {"max_mask_rate", filler_train.max_mask_rate},
                 {"seed", filler_train.seed}};
  j["oracle"] = {{"kind", oracle.kind},
                 {"flip_rate", oracle.flip_rate},
                 {"retries", oracle.annotate.retries},
                 {"backoff_ms", oracle.annotate.backoff.count()},
                 {"max_concurrency", oracle.annotate.max_concurrency},
                 {"endpoint",
                  {{"base_url", oracle.http.base_url},
                   {"model", oracle.http.model},
                   {"token_env", oracle.http.token_env},
                   {"timeout_seconds", oracle.http.timeout_seconds},
                   {"max_concurrency", oracle.http.max_concurrency}}}};
  j["dev_fraction"] = dev_fraction;
  j["top_k"] = top_k;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    // The seed goes first so explicit per-component seeds below still win.
    if (j.contains("seed")) c.apply_seed(j.at("seed").get<std::uint64_t>());
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("complex_path")) c.complex_path = j.at("complex_path").get<std::string>();
    if (j.contains("simple_path")) c.simple_path = j.at("simple_path").get<std::string>();
    if (j.contains("annotated_path")) c.annotated_path = j.at("annotated_path").get<std::string>();
    if (j.contains("cache_path")) c.cache_path = j.at("cache_path").get<std::string>();
    if (j.contains("toy")) c.toy = toy_from_json(j.at("toy"), c.toy);
    if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"), c.encoder);
    if (j.contains("filler_encoder")) c.filler_encoder = EncoderConfig::from_json(j.at("filler_encoder"), c.filler_encoder);
    if (j.contains("discriminator")) {
      const auto& d = j.at("discriminator");
      c.disc_train.epochs = d.value("epochs", c.disc_train.epochs);
      c.disc_train.batch_size = d.value("batch_size", c.disc_train.batch_size);
      c.disc_train.learning_rate = d.value("learning_rate", c.disc_train.learning_rate);
      c.disc_train.clip_norm = d.value("clip_norm", c.disc_train.clip_norm);
      c.disc_train.soft_mask_rate = d.value("soft_mask_rate", c.disc_train.soft_mask_rate);
      c.disc_train.seed = d.value("seed", c.disc_train.seed);
    }
    if (j.contains("weights")) c.weights = LossWeights::from_json(j.at("weights"), c.weights);
    if (j.contains("schedule")) c.schedule = TrainSchedule::from_json(j.at("schedule"), c.schedule);
    if (j.contains("filler")) {
      const auto& f = j.at("filler");
      c.filler_train.epochs = f.value("epochs", c.filler_train.epochs);
      c.filler_train.batch_size = f.value("batch_size", c.filler_train.batch_size);
      c.filler_train.learning_rate = f.value("learning_rate", c.filler_train.learning_rate);
      c.filler_train.clip_norm = f.value("clip_norm", c.filler_train.clip_norm);
      c.filler_train.min_mask_rate = f.value("min_mask_rate", c.filler_train.min_mask_rate);
      c.filler_train.max_mask_rate = f.value("max_mask_rate", c.filler_train.max_mask_rate);
      c.filler_train.seed = f.value("seed", c.filler_train.seed);
    }
    if (j.contains("oracle")) {
      const auto& o = j.at("oracle");
      c.oracle.kind = o.value("kind", c.oracle.kind);
      c.oracle.flip_rate = o.value("flip_rate", c.oracle.flip_rate);
      c.oracle.annotate.retries = o.value("retries", c.oracle.annotate.retries);
      c.oracle.annotate.backoff = std::chrono::milliseconds(o.value("backoff_ms", c.oracle.annotate.backoff.count()));
      c.oracle.annotate.max_concurrency = o.value("max_concurrency", c.oracle.annotate.max_concurrency);
      if (o.contains("endpoint")) c.oracle.http = HttpOracleConfig::from_json(o.at("endpoint"));
    }
    c.dev_fraction = j.value("dev_fraction", c.dev_fraction);
    c.top_k = j.value("top_k", c.top_k);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::set<std::string> complex_lexicon_words(const ToyWorldSpec& spec) {
  std::set<std::string> out;
  for (const auto& [c, s] : spec.complex_lexicon) out.insert(c);
  return out;
}

MetricReport editor_cwi_report(const EditPredictor& editor, const std::vector<AnnotatedInstance>& instances,
                               double threshold) {
  std::vector<PositionSet> preds, gold;
  for (const auto& g : group_by_sentence(instances)) {
    const auto edits = decode(editor.predict_probs(g.sentence), g.sentence, threshold);
    PositionSet p;
    for (std::size_t i = 0; i < edits.size(); ++i) {
      if (edits.is_mask(i)) p.insert(i);
    }
    preds.push_back(std::move(p));
    gold.emplace_back(g.positions.begin(), g.positions.end());
  }
  return cwi_metrics(preds, gold);
}

MetricReport oracle_cwi_report(MockOracle& oracle, const std::vector<AnnotatedInstance>& instances) {
  std::vector<PositionSet> preds, gold;
  for (const auto& g : group_by_sentence(instances)) {
    const auto labels = parse_response(oracle.complete(build_cwi_prompt(g.sentence).text) , g.sentence);
    PositionSet p;
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
      if (labels.labels.is_mask(i)) p.insert(i);
    }
    preds.push_back(std::move(p));
    gold.emplace_back(g.positions.begin(), g.positions.end());
  }
  return cwi_metrics(preds, gold);
}

ToyStage prepare_toy_stage(const RunConfig& config, std::ostream* progress) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  ToyStage st;
  st.config = config;
  st.world = generate_toy_corpus(config.toy);
  st.split = split_dev(st.world.corpus, config.dev_fraction, config.seed);
  st.vocab = Vocabulary::build({&st.world.corpus.complex_sentences, &st.world.corpus.simple_sentences});

  st.disc.emplace(config.encoder, st.vocab);
  st.disc_result = pretrain_discriminator(*st.disc, st.split.train, st.split.dev, config.disc_train);
  st.disc->freeze();
  st.checksum_before = st.disc->freeze_checksum();
  if (progress) *progress << "discriminator dev accuracy " << st.disc_result.dev_accuracy << "\n";

  std::size_t confident = 0;
  const auto held = group_by_sentence(st.world.annotated);
  for (const auto& g : held) confident += st.disc->classify(g.sentence).p_complex > 0.9;
  st.confident_complex = held.empty() ? 0.0 : static_cast<double>(confident) / static_cast<double>(held.size());

  MockOracle oracle(complex_lexicon_words(config.toy), config.oracle.flip_rate, config.seed);
  auto cache = config.cache_path ? std::make_unique<OracleCache>(*config.cache_path) : std::make_unique<OracleCache>();
  st.editor_data.train = st.split.train.complex_sentences;
  st.editor_data.dev = st.split.dev.complex_sentences;
  st.editor_data.train_labels = annotate(st.editor_data.train, &oracle, *cache, config.oracle.annotate);
  st.editor_data.dev_labels = annotate(st.editor_data.dev, &oracle, *cache, config.oracle.annotate);
  st.oracle_f1 = oracle_cwi_report(oracle, st.world.annotated).score.f1;
  st.seconds = elapsed(start);
  return st;
}

EditorRun run_toy_editor(const ToyStage& stage, const LossWeights& weights, std::ostream* jsonl) {
  const auto start = std::chrono::steady_clock::now();
  EditorRun run;
  run.editor.emplace(stage.config.encoder, stage.vocab);
  run.editor->encoder().load_weights_from(stage.disc->encoder());
  run.train = train_editor(*run.editor, *stage.disc, stage.editor_data, weights, stage.config.schedule, jsonl);
  run.heldout = editor_cwi_report(*run.editor, stage.world.annotated, stage.config.schedule.threshold);
  run.seconds = elapsed(start);
  return run;
}

FillStage run_toy_filler(const ToyStage& stage) {
  const auto start = std::chrono::steady_clock::now();
  FillStage fs;
  fs.filler.emplace(stage.config.filler_encoder, fill_vocabulary(stage.world.corpus));
  const auto pairs = mine_fill_pairs(stage.split.train.complex_sentences, stage.split.train.simple_sentences);
  fs.train = train_filler(*fs.filler, pairs, stage.config.filler_train);
  fs.seconds = elapsed(start);
  return fs;
}

PipelineScores score_pipeline(const EditPredictor& editor, const FillModel& filler,
                              const std::vector<AnnotatedInstance>& instances, std::size_t k, double threshold) {
  PipelineScores out;
  const auto grouped = group_by_sentence(instances);
  std::vector<PositionSet> cwi_pred, cwi_gold;
  std::vector<LsPrediction> ls_pred;
  std::vector<LsGold> ls_gold;
  std::size_t recovered = 0;
  for (const auto& g : grouped) {
    const auto r = simplify_sentence(g.sentence, editor, filler, k, threshold);
    PositionSet p;
    LsPrediction lp;
    for (const auto& m : r.candidates) {
      p.insert(m.position);
      lp.emplace_back(m.position, r.final_sentence[m.position]);
    }
    cwi_pred.push_back(std::move(p));
    cwi_gold.emplace_back(g.positions.begin(), g.positions.end());
    ls_pred.push_back(std::move(lp));
    LsGold lg;
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
      lg[g.positions[i]] = g.substitutions[i];
      if (r.final_sentence[g.positions[i]] == g.substitutions[i].front()) ++recovered;
    }
    ls_gold.push_back(std::move(lg));
  }
  std::vector<std::vector<std::string>> sg_pred, sg_gold;
  for (const auto& inst : instances) {
    auto edits = EditSequence::all_keep(inst.sentence.size());
    edits.labels[inst.complex_index] = Edit::Mask;
    const auto r = fill_edits(inst.sentence, edits, filler, k);
    std::vector<std::string> words;
    for (const auto& [w, s] : r.candidates.front().candidates) words.push_back(w);
    sg_pred.push_back(std::move(words));
    sg_gold.push_back(inst.gold_substitutions);
  }
  out.cwi = cwi_metrics(cwi_pred, cwi_gold);
  out.sg = sg_metrics(sg_pred, sg_gold);
  out.ls = ls_metrics(ls_pred, ls_gold);
  out.synonym_recovery = instances.empty() ? 0.0 : static_cast<double>(recovered) / static_cast<double>(instances.size());
  return out;
}

std::string format_criteria(const std::vector<CriterionResult>& criteria) {
  std::size_t width = 0;
  for (const auto& c : criteria) width = std::max(width, c.name.size());
  std::ostringstream out;
  for (const auto& c : criteria) {
    out << (c.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(static_cast<int>(width)) << c.name << "  "
        << c.detail << "\n";
  }
  return out.str();
}

bool ToyRunSummary::passed() const {
  for (const auto& c : criteria) {
    if (!c.pass) return false;
  }
  return true;
}

nlohmann::json ToyRunSummary::to_json() const {
  nlohmann::json crit = nlohmann::json::array();
  for (const auto& c : criteria) crit.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  auto prf = [](const Prf& p) { return nlohmann::json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; };
  return {{"disc_dev_accuracy", disc_dev_accuracy},
          {"confident_complex", confident_complex},
          {"oracle_f1", oracle_f1},
          {"editor_f1", editor_f1},
          {"synonym_recovery", scores.synonym_recovery},
          {"pipeline", {{"cwi", prf(scores.cwi.score)}, {"sg", prf(scores.sg.score)}, {"ls", prf(scores.ls.score)}}},
          {"checksum_before", checksum_before},
          {"checksum_after", checksum_after},
          {"editor_digest", editor_digest},
          {"filler_digest", filler_digest},
          {"seconds", seconds},
          {"criteria", crit}};
}

LossWeights ablated_weights(const LossWeights& full, const std::string& ablation) {
  LossWeights w = full;
  if (ablation == "llm") {
    w.lambda3 = 0.0;
  } else if (ablation == "conf") {
    w.lambda1 = 0.0;
  } else if (ablation == "inv") {
    w.lambda2 = 0.0;
  } else {
    throw ConfigError("unknown ablation: " + ablation + " (expected llm, conf or inv)");
  }
  w.validate();
  return w;
}

namespace {

std::string fixed(double v, int digits = 3) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

}  // namespace

ToyRunSummary run_toy_experiment(const RunConfig& config, const ToyRunOptions& options) {
  for (const auto& a : options.ablations) ablated_weights(config.weights, a);
  const auto start = std::chrono::steady_clock::now();
  std::ostream* progress = options.progress;
  ToyRunSummary out;

  const ToyStage stage = prepare_toy_stage(config, progress);
  out.disc_dev_accuracy = stage.disc_result.dev_accuracy;
  out.confident_complex = stage.confident_complex;
  out.oracle_f1 = stage.oracle_f1;
  out.checksum_before = stage.checksum_before;
  if (progress) *progress << "oracle held-out F1 " << fixed(stage.oracle_f1) << "\n";

  bool checksums_ok = true;
  auto run = [&](const std::string& key, const LossWeights& w) {
    std::ofstream log;
    if (options.log_dir) {
      std::filesystem::create_directories(*options.log_dir);
      log.open(*options.log_dir / ("editor_" + key + ".jsonl"));
    }
    EditorRun r = run_toy_editor(stage, w, options.log_dir ? &log : nullptr);
    checksums_ok = checksums_ok && r.train.discriminator_checksum == stage.checksum_before;
    out.editor_f1[key] = r.heldout.score.f1;
    if (progress) {
      *progress << "editor " << key << " held-out CWI F1 " << fixed(r.heldout.score.f1) << " (" << r.train.epochs_run
                << " epochs, " << fixed(r.seconds, 1) << " s)\n";
    }
    return r;
  };

  EditorRun full = run("full", config.weights);
  out.editor_digest = parameter_digest(std::as_const(*full.editor).parameters());
  for (const auto& a : {"llm", "conf", "inv"}) {
    if (options.ablations.count(a)) run(std::string("no_") + a, ablated_weights(config.weights, a));
  }

  FillStage fill = run_toy_filler(stage);
  out.filler_digest = parameter_digest(std::as_const(*fill.filler).parameters());
  if (progress) *progress << "filler trained (" << fixed(fill.seconds, 1) << " s)\n";
  out.scores = score_pipeline(*full.editor, *fill.filler, stage.world.annotated, config.top_k,
                              config.schedule.threshold);
  out.checksum_after = stage.disc->freeze_checksum();
  out.seconds = elapsed(start);

  const double f1 = out.editor_f1.at("full");
  const bool toy_ok = out.disc_dev_accuracy >= 0.95 && f1 >= 0.80 && out.scores.synonym_recovery >= 0.70 &&
                      out.seconds < 600.0;
  out.criteria.push_back({"toy adversarial run", toy_ok,
                          "disc dev acc " + fixed(out.disc_dev_accuracy) + " (>= 0.95), editor F1 " + fixed(f1) +
                              " (>= 0.80), synonym recovery " + fixed(out.scores.synonym_recovery) +
                              " (>= 0.70), " + fixed(out.seconds, 1) + " s (< 600)"});
  if (options.ablations.size() == 3) {
    const double nl = out.editor_f1.at("no_llm");
    const double nc = out.editor_f1.at("no_conf");
    const double ni = out.editor_f1.at("no_inv");
    const bool ok = f1 - nl >= 0.10 && f1 > ni && f1 > nc && ni >= nc && nc > nl;
    out.criteria.push_back({"ablation direction", ok,
                            "full " + fixed(f1, 4) + ", w/o-inv " + fixed(ni, 4) + ", w/o-conf " + fixed(nc, 4) +
                                ", w/o-LLM " + fixed(nl, 4) + " (full > w/o-inv >= w/o-conf > w/o-LLM, margin >= 0.10)"});
  }
  const bool frozen_ok = checksums_ok && out.checksum_after == out.checksum_before;
  out.criteria.push_back({"frozen discriminator", frozen_ok,
                          "checksum " + out.checksum_before.substr(0, 16) + " before, " +
                              out.checksum_after.substr(0, 16) + " after"});
  return out;
}

}  // namespace lexsimp
