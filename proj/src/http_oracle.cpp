#include "lexsimp/llm_oracle.hpp"

#include <cstdlib>

#include "lexsimp/errors.hpp"

// After the Eigen-dependent headers: the OpenSSL headers pulled in here
// define macros that collide with Eigen's internals.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace lexsimp {

HttpOracle::HttpOracle(HttpOracleConfig config) : config_(std::move(config)) {
  const char* token = std::getenv(config_.token_env.c_str());
  if (!token || !*token) throw ConfigError("environment variable " + config_.token_env + " is not set");
  token_ = token;
  const auto scheme_end = config_.base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint base_url needs a scheme: " + config_.base_url);
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = config_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpOracle::complete(const std::string& prompt) {
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(config_.timeout_seconds);
  const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_bearer_token_auth(token_);

  nlohmann::json body{{"model", config_.model},
                      {"temperature", 0},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  auto res = client.Post(path_prefix_ + "/chat/completions", body.dump(), "application/json");
  if (!res) throw EndpointError("request failed: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500) {
    throw EndpointError("endpoint returned HTTP " + std::to_string(res->status), true);
  }
  if (res->status != 200) {
    throw EndpointError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false);
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw EndpointError(std::string("malformed endpoint response: ") + e.what(), true);
  }
}

}  // namespace lexsimp
