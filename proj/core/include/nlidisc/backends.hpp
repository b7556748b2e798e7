#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nlidisc/gateway.hpp"

namespace nlidisc {

/// One line of a mock script: the first rule whose `match` occurs in the
/// prompt text answers it. An empty match answers everything.
struct MockRule {
  std::string match;
  std::vector<std::string> responses;
};

/// Deterministic scriptable backend.
///
/// A matching rule answers sample i with responses[i % n], or, when the
/// request carries a seed, with a response picked by hashing (seed,
/// prompt fingerprint, i). Prompts no rule matches get a built-in reply
/// shaped for the prompt kind: a "Label: <x>" line for task and finalize
/// prompts, a short argument for continuations and session turns, and a
/// well-formed Human1/Human2 dialogue for pseudo-discussion requests.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(std::vector<MockRule> rules = {}, std::string id = "mock");

  /// Script format: JSONL of {"match": str, "responses": [str, ...]}.
  static std::vector<MockRule> load_script(const std::filesystem::path& path);

  std::string id() const override { return id_; }
  BackendReply complete(const CompletionRequest& request) override;
  bool estimates_tokens() const override { return true; }

  std::uint64_t request_count() const noexcept { return requests_.load(); }

 private:
  std::vector<MockRule> rules_;
  std::string id_;
  std::atomic<std::uint64_t> requests_{0};
};

/// Backend whose replies come from a callback; tests use it for oracle,
/// capitulating and stubborn systems.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<BackendReply(const CompletionRequest&)>;
  FunctionBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}

  std::string id() const override { return id_; }
  BackendReply complete(const CompletionRequest& request) override {
    ++requests_;
    return fn_(request);
  }
  bool estimates_tokens() const override { return true; }
  std::uint64_t request_count() const noexcept { return requests_.load(); }

 private:
  std::string id_;
  Fn fn_;
  std::atomic<std::uint64_t> requests_{0};
};

/// OpenAI-style HTTP JSON backend.
///
/// Completion interface: POST {path} {"model", "prompt", "temperature",
/// "max_tokens", "stop"} -> {"choices": [{"text", "finish_reason"}],
/// "usage": {...}}. Chat interface (chat=true): the rendered prompt is sent
/// as a single user message and the reply read from
/// choices[0].message.content. The key goes in `Authorization: Bearer <key>`.
struct HttpBackendConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/completions";
  std::string model;
  bool chat = false;
  std::string api_key;
  int timeout_seconds = 60;
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  std::string id() const override;
  BackendReply complete(const CompletionRequest& request) override;

 private:
  HttpBackendConfig config_;
};

}  // namespace nlidisc
