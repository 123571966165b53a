#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lexsimp/corpus.hpp"
#include "lexsimp/edit_predictor.hpp"

namespace lexsimp {

inline constexpr std::string_view kCwiPromptVersion = "cwi-v1";
inline constexpr std::string_view kCwiInstruction = "Please identify the complex words in the following sentence.";
inline constexpr std::string_view kCwiOutputFormat = "[w1, w2, ...]";

struct CwiPrompt {
  std::string text;
};

CwiPrompt build_cwi_prompt(const SentenceTokens& sentence);
// Recovers the sentence line from a rendered prompt; nullopt if the layout differs.
std::optional<std::string> prompt_sentence(std::string_view prompt);

struct OracleResponse {
  std::string raw;
  std::vector<std::string> words;
  bool usable = false;
};

struct PseudoLabels {
  EditSequence labels;
  std::vector<bool> align_mask;
  bool usable = false;

  std::size_t aligned_count() const;
};

// Words of the first balanced [...] list, trimmed; nullopt when none exists.
std::optional<std::vector<std::string>> extract_bracket_list(std::string_view raw);
// Renders words in the bracketed response grammar.
std::string render_word_list(const std::vector<std::string>& words);

PseudoLabels parse_response(std::string_view raw, const SentenceTokens& sentence);

// Anything that turns a prompt into raw response text. Implementations must
// be safe to call concurrently. Failures raise EndpointError.
class OracleEndpoint {
 public:
  virtual ~OracleEndpoint() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Lexicon oracle with independent per-token verdict flips.
class MockOracle : public OracleEndpoint {
 public:
  MockOracle(std::set<std::string> lexicon, double flip_rate, std::uint64_t seed);
  std::string complete(const std::string& prompt) override;
  // The verdicts the mock would give, one per token (true = complex).
  std::vector<bool> verdicts(const SentenceTokens& sentence) const;

 private:
  std::set<std::string> lexicon_;
  double flip_rate_;
  std::uint64_t seed_;
};

struct HttpOracleConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  std::string token_env = "OPENAI_API_KEY";
  double timeout_seconds = 30.0;
  int max_concurrency = 4;

  static HttpOracleConfig from_json(const nlohmann::json& j);
};

// OpenAI-style chat-completions client.
class HttpOracle : public OracleEndpoint {
 public:
  explicit HttpOracle(HttpOracleConfig config);
  std::string complete(const std::string& prompt) override;

 private:
  HttpOracleConfig config_;
  std::string token_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

// Append-only JSON-lines store keyed by (token digest, prompt version).
class OracleCache {
 public:
  OracleCache() = default;  // in-memory only
  explicit OracleCache(std::filesystem::path path);

  static std::string key(const SentenceTokens& sentence, std::string_view prompt_version = kCwiPromptVersion);

  std::optional<OracleResponse> find(const std::string& digest) const;
  void insert(const std::string& digest, const OracleResponse& response);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::map<std::string, OracleResponse> entries_;
};

struct AnnotateOptions {
  int retries = 3;
  std::chrono::milliseconds backoff{50};
  int max_concurrency = 4;
};

struct AnnotateStats {
  std::size_t cache_hits = 0;
  std::size_t endpoint_calls = 0;
  std::size_t unusable = 0;
};

// Cache-first annotation. A null client means cache-only. Throws
// EndpointError naming uncovered sentences when the endpoint cannot answer.
std::vector<PseudoLabels> annotate(const std::vector<SentenceTokens>& sentences, OracleEndpoint* client,
                                   OracleCache& cache, const AnnotateOptions& options = {},
                                   AnnotateStats* stats = nullptr);

}  // namespace lexsimp
