#include "lexsimp/llm_oracle.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "lexsimp/checkpoint.hpp"
#include "lexsimp/errors.hpp"
#include "lexsimp/rng.hpp"

namespace lexsimp {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Lowercased with leading/trailing ASCII punctuation and quotes removed.
std::string normalize_word(std::string_view w) {
  std::size_t b = 0, e = w.size();
  auto strip = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) || std::isspace(static_cast<unsigned char>(c)); };
  while (b < e && strip(w[b])) ++b;
  while (e > b && strip(w[e - 1])) --e;
  return to_lower(w.substr(b, e - b));
}

}  // namespace

CwiPrompt build_cwi_prompt(const SentenceTokens& sentence) {
  if (sentence.size() == 0) throw ShapeError("cannot build a prompt for an empty sentence");
  std::string text;
  text += kCwiInstruction;
  text += "\nSentence:\n";
  text += sentence.text();
  text += "\nOutput format:\n";
  text += kCwiOutputFormat;
  text += "\n";
  return {text};
}

std::optional<std::string> prompt_sentence(std::string_view prompt) {
  static constexpr std::string_view marker = "\nSentence:\n";
  const auto b = prompt.find(marker);
  if (b == std::string_view::npos) return std::nullopt;
  const auto start = b + marker.size();
  const auto end = prompt.find('\n', start);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(prompt.substr(start, end - start));
}

std::size_t PseudoLabels::aligned_count() const {
  std::size_t n = 0;
  for (bool a : align_mask) n += a;
  return n;
}

std::optional<std::vector<std::string>> extract_bracket_list(std::string_view raw) {
  const auto open = raw.find('[');
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  std::size_t close = std::string_view::npos;
  for (std::size_t i = open; i < raw.size(); ++i) {
    if (raw[i] == '[') ++depth;
    if (raw[i] == ']' && --depth == 0) {
      close = i;
      break;
    }
  }
  if (close == std::string_view::npos) return std::nullopt;
  std::vector<std::string> words;
  const std::string_view body = raw.substr(open + 1, close - open - 1);
  std::size_t start = 0;
  while (start <= body.size()) {
    auto comma = body.find(',', start);
    if (comma == std::string_view::npos) comma = body.size();
    auto item = trim(body.substr(start, comma - start));
    if (!item.empty()) words.push_back(std::move(item));
    start = comma + 1;
  }
  return words;
}

std::string render_word_list(const std::vector<std::string>& words) {
  std::string out = "[";
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ", ";
    out += words[i];
  }
  return out + "]";
}

PseudoLabels parse_response(std::string_view raw, const SentenceTokens& sentence) {
  PseudoLabels out;
  out.labels = EditSequence::all_keep(sentence.size());
  out.align_mask.assign(sentence.size(), false);
  const auto words = extract_bracket_list(raw);
  if (!words) return out;
  std::vector<std::string> norm_tokens;
  for (const auto& t : sentence.tokens) norm_tokens.push_back(normalize_word(t));
  std::size_t matched_words = 0, listed = 0;
  for (const auto& w : *words) {
    const auto nw = normalize_word(w);
    if (nw.empty()) continue;
    ++listed;
    bool hit = false;
    for (std::size_t i = 0; i < norm_tokens.size(); ++i) {
      if (norm_tokens[i] == nw) {
        out.labels.labels[i] = Edit::Mask;
        hit = true;
      }
    }
    matched_words += hit;
  }
  if (listed > 0 && matched_words == 0) return out;
  out.usable = true;
  out.align_mask.assign(sentence.size(), true);
  return out;
}

MockOracle::MockOracle(std::set<std::string> lexicon, double flip_rate, std::uint64_t seed)
    : lexicon_(std::move(lexicon)), flip_rate_(flip_rate), seed_(seed) {
  if (!(flip_rate >= 0.0 && flip_rate < 0.5)) throw ConfigError("mock oracle flip rate must lie in [0, 0.5)");
}

std::vector<bool> MockOracle::verdicts(const SentenceTokens& sentence) const {
  Rng rng(fnv1a(sentence.text()) ^ seed_);
  std::vector<bool> out;
  out.reserve(sentence.size());
  for (const auto& tok : sentence.tokens) {
    bool complex = lexicon_.count(to_lower(tok)) != 0;
    // One draw per token keeps verdicts independent of the flip rate.
    if (rng.uniform() < flip_rate_) complex = !complex;
    out.push_back(complex);
  }
  return out;
}

std::string MockOracle::complete(const std::string& prompt) {
  const auto line = prompt_sentence(prompt);
  if (!line) throw EndpointError("mock oracle could not find the sentence in the prompt", false);
  const SentenceTokens sentence{tokenize(*line), true};
  const auto v = verdicts(sentence);
  std::vector<std::string> words;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (v[i] && !is_punctuation(sentence[i]) && seen.insert(sentence[i]).second) words.push_back(sentence[i]);
  }
  return render_word_list(words);
}

HttpOracleConfig HttpOracleConfig::from_json(const nlohmann::json& j) {
  HttpOracleConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.token_env = j.value("token_env", c.token_env);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
  if (c.timeout_seconds <= 0 || c.max_concurrency < 1) throw ConfigError("invalid endpoint timeout or concurrency");
  return c;
}

OracleCache::OracleCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) return;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("prompt_version").get<std::string>() != kCwiPromptVersion) continue;
      OracleResponse r{j.at("raw").get<std::string>(), j.at("words").get<std::vector<std::string>>(),
                       j.at("usable").get<bool>()};
      entries_.emplace(j.at("digest").get<std::string>(), std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("oracle cache " + path_->string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
}

std::string OracleCache::key(const SentenceTokens& sentence, std::string_view prompt_version) {
  std::string bytes(prompt_version);
  for (const auto& t : sentence.tokens) {
    bytes += '\x1f';
    bytes += t;
  }
  return sha256_hex(bytes);
}

std::optional<OracleResponse> OracleCache::find(const std::string& digest) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void OracleCache::insert(const std::string& digest, const OracleResponse& response) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!entries_.emplace(digest, response).second) return;
  if (!path_) return;
  nlohmann::json j{{"digest", digest},
                   {"prompt_version", std::string(kCwiPromptVersion)},
                   {"raw", response.raw},
                   {"words", response.words},
                   {"usable", response.usable}};
  const std::string line = j.dump() + "\n";
  std::ofstream out(*path_, std::ios::app | std::ios::binary);
  if (!out) throw LoadError("cannot append to oracle cache: " + path_->string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
}

std::size_t OracleCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::vector<PseudoLabels> annotate(const std::vector<SentenceTokens>& sentences, OracleEndpoint* client,
                                   OracleCache& cache, const AnnotateOptions& options, AnnotateStats* stats) {
  std::vector<PseudoLabels> out(sentences.size());
  std::vector<std::string> keys(sentences.size());
  std::vector<std::size_t> misses;
  AnnotateStats local;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    keys[i] = OracleCache::key(sentences[i]);
    if (auto hit = cache.find(keys[i])) {
      out[i] = parse_response(hit->raw, sentences[i]);
      ++local.cache_hits;
    } else {
      misses.push_back(i);
    }
  }
  if (!misses.empty() && !client) {
    std::string msg = std::to_string(misses.size()) + " sentence(s) missing from the oracle cache and no endpoint:";
    for (std::size_t k = 0; k < std::min<std::size_t>(misses.size(), 5); ++k) msg += "\n  " + sentences[misses[k]].text();
    throw EndpointError(msg, false);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  std::mutex fail_mu;
  std::vector<std::size_t> failed;
  std::string last_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= misses.size()) return;
      const std::size_t i = misses[k];
      const std::string prompt = build_cwi_prompt(sentences[i]).text;
      std::optional<std::string> raw;
      std::string error;
      auto delay = options.backoff;
      for (int attempt = 0; attempt <= options.retries; ++attempt) {
        if (attempt > 0 && delay.count() > 0) {
          std::this_thread::sleep_for(delay);
          delay *= 2;
        }
        try {
          ++calls;
          std::string r = client->complete(prompt);
          raw = std::move(r);
          if (parse_response(*raw, sentences[i]).usable) break;
        } catch (const EndpointError& e) {
          error = e.what();
          if (!e.transient()) break;
        }
      }
      if (!raw) {
        std::lock_guard<std::mutex> lock(fail_mu);
        failed.push_back(i);
        last_error = error;
        continue;
      }
      out[i] = parse_response(*raw, sentences[i]);
      OracleResponse resp;
      resp.raw = *raw;
      resp.usable = out[i].usable;
      if (resp.usable) resp.words = *extract_bracket_list(*raw);
      cache.insert(keys[i], resp);
    }
  };

  const int n_threads = std::max(1, std::min<int>(options.max_concurrency, static_cast<int>(misses.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  local.endpoint_calls = calls.load();
  for (const auto& p : out) local.unusable += !p.usable;
  if (stats) *stats = local;

  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    std::string msg = std::to_string(failed.size()) + " sentence(s) could not be annotated (" + last_error + "):";
    for (std::size_t k = 0; k < std::min<std::size_t>(failed.size(), 5); ++k) msg += "\n  " + sentences[failed[k]].text();
    throw EndpointError(msg, false);
  }
  return out;
}

}  // namespace lexsimp
