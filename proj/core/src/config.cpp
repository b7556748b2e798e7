#include "nlidisc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

const std::vector<std::string>& Settings::known_keys() {
  static const std::vector<std::string> keys = {
      "backend.kind",        "backend.mock_script",   "backend.base_url",     "backend.path",
      "backend.model",       "backend.chat",          "backend.api_key_env",  "backend.timeout_seconds",
      "backend.max_retries", "backend.rate_limit",    "backend.max_requests", "backend.max_tokens",
      "sampling.temperature", "sampling.n_samples",   "sampling.max_tokens",  "sampling.seed",
      "prompts.task_description", "prompts.finalize_cue",
      "embedding.kind",      "embedding.dim",         "embedding.seed",       "embedding.base_url",
      "embedding.path",      "embedding.api_key_env",
      "run.seed",            "run.jobs",              "run.cache_dir",
      "corpora.snli_dev",    "corpora.snli_test",     "corpora.anli_r1",      "corpora.anli_r2",
      "corpora.anli_r3",     "corpora.custom",        "corpora.exemplars",    "corpora.records",
      "corpora.pool",
      "server.host",         "server.port",           "server.cors_origin",   "server.token_env",
      "server.event_log",
  };
  return keys;
}

static std::string unescape(const std::string& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == '\\' && i + 1 < v.size() && v[i + 1] == 'n') {
      out += '\n';
      ++i;
    } else {
      out += v[i];
    }
  }
  return out;
}

Settings Settings::from_ini(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::file_not_found, path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(Errc::config_error, e.what());
  }
  Settings s;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(Errc::config_error, "key '" + section + "' outside a section");
    for (const auto& [key, value] : body) s.set(section + "." + key, unescape(value.data()));
  }
  return s;
}

void Settings::apply_env(const EnvLookup& env) {
  for (const auto& key : known_keys()) {
    std::string name = "NLIDISC_" + key;
    std::replace(name.begin(), name.end(), '.', '_');
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
    if (auto v = env(name)) values_[key] = unescape(*v);
  }
}

void Settings::set(const std::string& key, std::string value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw Error(Errc::config_error, "unknown key '" + key + "'");
  values_[key] = std::move(value);
}

std::optional<std::string> Settings::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw Error(Errc::config_error, key + ": not a number: '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(Errc::config_error, key + ": not a number: '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  auto l = to_lower(v);
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw Error(Errc::config_error, key + ": not a boolean: '" + v + "'");
}

}  // namespace

AppConfig resolve_config(const Settings& s) {
  AppConfig c;
  auto str = [&](const char* key, std::string& out) {
    if (auto v = s.get(key)) out = *v;
  };
  auto num = [&]<typename T>(const char* key, T& out) {
    if (auto v = s.get(key)) out = parse_number<T>(key, *v);
  };
  auto opt_u64 = [&](const char* key, std::optional<std::uint64_t>& out) {
    if (auto v = s.get(key)) out = parse_number<std::uint64_t>(key, *v);
  };

  str("backend.kind", c.backend.kind);
  if (c.backend.kind != "mock" && c.backend.kind != "http" && c.backend.kind != "offline")
    throw Error(Errc::config_error, "backend.kind: expected mock, http or offline");
  str("backend.mock_script", c.backend.mock_script);
  str("backend.base_url", c.backend.http.base_url);
  str("backend.path", c.backend.http.path);
  str("backend.model", c.backend.http.model);
  if (auto v = s.get("backend.chat")) c.backend.http.chat = parse_bool("backend.chat", *v);
  str("backend.api_key_env", c.backend.api_key_env);
  num("backend.timeout_seconds", c.backend.http.timeout_seconds);
  num("backend.max_retries", c.backend.max_retries);
  if (auto v = s.get("backend.rate_limit")) c.backend.rate_limit = parse_double("backend.rate_limit", *v);
  opt_u64("backend.max_requests", c.backend.max_requests);
  opt_u64("backend.max_tokens", c.backend.max_tokens);

  if (auto v = s.get("sampling.temperature")) c.sampling.temperature = parse_double("sampling.temperature", *v);
  num("sampling.n_samples", c.sampling.n_samples);
  num("sampling.max_tokens", c.sampling.max_tokens);
  opt_u64("sampling.seed", c.sampling.seed);
  try {
    c.sampling.validate();
  } catch (const Error& e) {
    throw Error(Errc::config_error, std::string("sampling: ") + e.what());
  }

  str("prompts.task_description", c.prompts.task_description);
  str("prompts.finalize_cue", c.prompts.finalize_cue);
  try {
    check(c.prompts);
  } catch (const Error& e) {
    throw Error(Errc::config_error, std::string("prompts: ") + e.what());
  }

  str("embedding.kind", c.embedding.kind);
  if (c.embedding.kind != "hash" && c.embedding.kind != "http")
    throw Error(Errc::config_error, "embedding.kind: expected hash or http");
  num("embedding.dim", c.embedding.dim);
  num("embedding.seed", c.embedding.seed);
  str("embedding.base_url", c.embedding.base_url);
  str("embedding.path", c.embedding.path);
  str("embedding.api_key_env", c.embedding.api_key_env);

  num("run.seed", c.seed);
  num("run.jobs", c.jobs);
  str("run.cache_dir", c.cache_dir);

  for (const char* name : {"snli_dev", "snli_test", "anli_r1", "anli_r2", "anli_r3", "custom"}) {
    std::string key = std::string("corpora.") + name;
    if (auto v = s.get(key)) {
      std::string corpus = name;
      std::replace(corpus.begin(), corpus.end(), '_', '-');
      c.corpora[corpus] = *v;
    }
  }
  str("corpora.exemplars", c.exemplars);
  str("corpora.records", c.records);
  str("corpora.pool", c.pool);

  str("server.host", c.server.host);
  num("server.port", c.server.port);
  str("server.cors_origin", c.server.cors_origin);
  str("server.token_env", c.server.token_env);
  str("server.event_log", c.server.event_log);
  return c;
}

std::shared_ptr<Backend> make_backend(const BackendSettings& settings, const EnvLookup& env) {
  if (settings.kind == "mock") {
    if (settings.mock_script.empty()) return std::make_shared<MockBackend>();
    auto rules = MockBackend::load_script(settings.mock_script);
    const auto digest = sha256_hex(read_file(settings.mock_script)).substr(0, 12);
    return std::make_shared<MockBackend>(std::move(rules), "mock:" + digest);
  }
  if (settings.kind == "http") {
    HttpBackendConfig http = settings.http;
    if (http.model.empty()) throw Error(Errc::config_error, "backend.model is required for the http backend");
    if (!settings.api_key_env.empty())
      if (auto key = env(settings.api_key_env)) http.api_key = *key;
    return std::make_shared<HttpBackend>(std::move(http));
  }
  if (settings.kind == "offline") {
    throw Error(Errc::config_error, "the offline backend is created by replay with the recorded backend id");
  }
  throw Error(Errc::config_error, "unknown backend kind '" + settings.kind + "'");
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const EmbeddingSettings& settings, const EnvLookup& env) {
  if (settings.kind == "hash") return std::make_unique<HashEmbeddingProvider>(settings.dim, settings.seed);
  if (settings.base_url.empty()) throw Error(Errc::config_error, "embedding.base_url is required for http embeddings");
  std::string key;
  if (!settings.api_key_env.empty())
    if (auto v = env(settings.api_key_env)) key = *v;
  return std::make_unique<HttpEmbeddingProvider>(settings.base_url, settings.path, key);
}

std::unique_ptr<Gateway> make_gateway(std::shared_ptr<Backend> backend, const BackendSettings& settings,
                                      std::shared_ptr<CompletionCache> cache,
                                      std::shared_ptr<ArtifactSink> artifacts) {
  Gateway::Options opts;
  opts.retry.max_retries = settings.max_retries;
  opts.budget.max_requests = settings.max_requests;
  opts.budget.max_tokens = settings.max_tokens;
  opts.cache = std::move(cache);
  opts.artifacts = std::move(artifacts);
  if (settings.rate_limit > 0.0)
    opts.limiter = std::make_shared<RateLimiter>(settings.rate_limit, std::max(1.0, settings.rate_limit));
  return std::make_unique<Gateway>(std::move(backend), std::move(opts));
}

}  // namespace nlidisc
