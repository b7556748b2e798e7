#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "nlidisc/backends.hpp"
#include "nlidisc/embeddings.hpp"
#include "nlidisc/gateway.hpp"
#include "nlidisc/prompting.hpp"

namespace nlidisc {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
/// std::getenv wrapper.
std::optional<std::string> process_env(const std::string& name);

/// Flat "section.key" settings read from an INI file. Values may use "\n"
/// for a line break. Every key must be one of known_setting_keys().
class Settings {
 public:
  /// Throws FileNotFound or ConfigError.
  static Settings from_ini(const std::filesystem::path& path);
  static const std::vector<std::string>& known_keys();

  /// NLIDISC_<SECTION>_<KEY> (upper case) overrides "section.key".
  void apply_env(const EnvLookup& env);
  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, std::string value);
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct BackendSettings {
  /// mock | http | offline
  std::string kind = "mock";
  std::string mock_script;
  HttpBackendConfig http;
  /// The key is only ever read from this environment variable.
  std::string api_key_env = "OPENAI_API_KEY";
  int max_retries = 4;
  double rate_limit = 0.0;  // requests per second; 0 = unlimited
  std::optional<std::uint64_t> max_requests;
  std::optional<std::uint64_t> max_tokens;
};

struct EmbeddingSettings {
  /// hash | http
  std::string kind = "hash";
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::string base_url;
  std::string path = "/embed";
  std::string api_key_env;
};

struct ServerSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  /// Environment variable holding the optional bearer token.
  std::string token_env;
  std::string event_log;
};

struct AppConfig {
  BackendSettings backend;
  SamplingParams sampling;
  PromptConfig prompts;
  EmbeddingSettings embedding;
  ServerSettings server;
  std::uint64_t seed = 0;
  /// 0 = hardware concurrency.
  std::size_t jobs = 0;
  std::string cache_dir;
  /// Corpus name (snli-dev, anli-r1, ...) -> JSONL path.
  std::map<std::string, std::string> corpora;
  std::string exemplars;
  std::string records;
  std::string pool;
};

/// Throws ConfigError naming the offending key.
AppConfig resolve_config(const Settings& settings);

/// Backend id that also reflects the mock script, so caches never mix
/// completions from different scripts.
std::shared_ptr<Backend> make_backend(const BackendSettings& settings, const EnvLookup& env = process_env);
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingSettings& settings,
                                                           const EnvLookup& env = process_env);
/// Gateway over `backend` with the configured retry policy, budget and
/// rate limit. `cache` and `artifacts` may be null.
std::unique_ptr<Gateway> make_gateway(std::shared_ptr<Backend> backend, const BackendSettings& settings,
                                      std::shared_ptr<CompletionCache> cache,
                                      std::shared_ptr<ArtifactSink> artifacts);

}  // namespace nlidisc
