#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlidisc/corpus.hpp"
#include "nlidisc/gateway.hpp"
#include "nlidisc/prompting.hpp"

namespace nlidisc {

struct ServiceOptions {
  /// Problems addressable by id and served by /problems/sample.
  std::vector<NLIProblem> problems;
  std::vector<Exemplar> exemplars;
  SamplingParams params;
  PromptConfig prompts;
  /// Sessions are replayed from here on startup and every change appended.
  std::optional<std::filesystem::path> event_log;
  std::string cors_origin = "*";
  /// When set, every request except OPTIONS needs "Authorization: Bearer <token>".
  std::optional<std::string> bearer_token;
  /// Timestamp source for created_at; defaults to the UTC wall clock.
  std::function<std::string()> clock;
  std::uint64_t seed = 0;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// JSON endpoints over the session, corpus and transcript operations.
///
///   GET  /health
///   GET  /problems/sample?filter=three-of-five&n=K&seed=S&blind=B
///   GET  /problems/{id}?blind=B
///   POST /sessions                 {"problem_id" | "problem", "mode", "blind"}
///   GET  /sessions
///   GET  /sessions/{id}
///   POST /sessions/{id}/turns      {"text", "label"?}
///   POST /sessions/{id}/finalize
///   POST /sessions/{id}/tags       {"tags": [tag | null, ...]}
///   GET  /sessions/{id}/export
///   POST /scenarios                {"problem_ids" | "n", "filter", "seed", "mode", "blind"}
///   GET  /scenarios/{id}
///   GET  /scenarios/{id}/outcomes  (researcher view; reveals scenario kinds)
///
/// Errors: {"error": {"code": "<ErrorName>", "message": "..."}} with
/// 400 bad input, 401 auth, 404 unknown id, 409 wrong phase or a turn
/// already in flight on the session, 422 unprocessable content, 502
/// backend failure.
class ApiService {
 public:
  /// Throws on an unreadable event log.
  ApiService(std::shared_ptr<Gateway> gateway, ServiceOptions options);
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  /// Transport-independent entry point; the HTTP server calls this.
  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body,
                     const std::map<std::string, std::string>& query = {},
                     const std::string& authorization = {});

  /// Binds the listener; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  void stop();

  std::size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nlidisc
