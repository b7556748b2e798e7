#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlidisc/labels.hpp"
#include "nlidisc/prompting.hpp"

namespace nlidisc {

struct SamplingParams {
  double temperature = 0.7;
  int n_samples = 10;
  int max_tokens = 256;
  /// Honoured by the mock backend only.
  std::optional<std::uint64_t> seed;

  /// Throws InvalidArgument.
  void validate() const;
  SamplingParams with_samples(int n) const {
    SamplingParams p = *this;
    p.n_samples = n;
    return p;
  }
  bool operator==(const SamplingParams&) const = default;
};

enum class FinishReason { stop, length, error };
std::string_view to_string(FinishReason reason) noexcept;

struct Completion {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::string backend_id;
  std::int64_t latency_ms = 0;

  bool operator==(const Completion&) const = default;
};

/// One sample request as seen by a backend adapter.
struct CompletionRequest {
  std::string prompt;
  std::vector<std::string> stops;
  PromptKind kind = PromptKind::task;
  std::string fingerprint;
  double temperature = 0.7;
  int max_tokens = 256;
  std::optional<std::uint64_t> seed;
  std::size_t sample_index = 0;
};

struct BackendReply {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
};

/// Completion provider. Implementations must be safe for concurrent calls
/// and report failures as Error: transient_backend (retried), auth_error,
/// backend_unavailable or cache_miss (not retried).
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual BackendReply complete(const CompletionRequest& request) = 0;
  /// True when token counts are never reported and must be estimated.
  virtual bool estimates_tokens() const { return false; }
};

/// Cuts `text` at the earliest occurrence of any stop sequence.
std::string truncate_at_stop(std::string_view text, std::span<const std::string> stops,
                             bool* truncated = nullptr);

/// Whitespace token count; the documented estimator for backends that do not
/// report usage.
std::size_t estimate_tokens(std::string_view text);

/// Label prediction from free text. Case-insensitive; a label word must start
/// at a word boundary ("entailments" still reads as entailment). The search
/// covers the tail after the last "Label:" marker, then earlier markers, then
/// the whole text; the earliest label word in the first tail holding one wins.
/// Throws NoLabelFound.
Label parse_label(std::string_view completion_text);

std::string cache_key(std::string_view fingerprint, const SamplingParams& params,
                      std::string_view backend_id, std::size_t sample_index);

class CompletionCache {
 public:
  virtual ~CompletionCache() = default;
  virtual std::optional<Completion> get(const std::string& key) = 0;
  virtual void put(const std::string& key, const Completion& completion) = 0;
};

class MemoryCache final : public CompletionCache {
 public:
  std::optional<Completion> get(const std::string& key) override;
  void put(const std::string& key, const Completion& completion) override;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Completion> entries_;
};

/// Content-addressed store: <dir>/<key[0:2]>/<key>.json, written atomically
/// via rename so concurrent readers never see partial files.
class DiskCache final : public CompletionCache {
 public:
  explicit DiskCache(std::filesystem::path dir);
  std::optional<Completion> get(const std::string& key) override;
  void put(const std::string& key, const Completion& completion) override;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds base_delay{250};
  std::chrono::milliseconds max_delay{8000};
};

struct Budget {
  std::optional<std::uint64_t> max_requests;
  std::optional<std::uint64_t> max_tokens;
};

/// Token bucket shared by every caller of a gateway.
class RateLimiter {
 public:
  RateLimiter(double requests_per_second, double burst);
  void acquire();

 private:
  std::mutex mu_;
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct BackendUsage {
  std::uint64_t requests = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t prompt_tokens = 0;
  std::uint64_t completion_tokens = 0;
  std::uint64_t failures = 0;
  bool tokens_estimated = false;

  bool operator==(const BackendUsage&) const = default;
};

struct UsageReport {
  std::string run_id;
  std::map<std::string, BackendUsage> per_backend;
};

/// Receives every prompt/completion exchange for the raw artifact log.
class ArtifactSink {
 public:
  virtual ~ArtifactSink() = default;
  virtual void record(const RenderedPrompt& prompt, const SamplingParams& params,
                      std::size_t first_sample, const std::vector<Completion>& completions) = 0;
};

class Gateway {
 public:
  struct Options {
    RetryPolicy retry;
    Budget budget;
    std::shared_ptr<CompletionCache> cache;
    std::shared_ptr<RateLimiter> limiter;
    std::shared_ptr<ArtifactSink> artifacts;
    /// Replaceable so tests do not sleep through backoff.
    std::function<void(std::chrono::milliseconds)> sleep;
  };

  explicit Gateway(std::shared_ptr<Backend> backend);
  Gateway(std::shared_ptr<Backend> backend, Options options);

  /// Returns exactly params.n_samples completions for sample indices
  /// [first_sample, first_sample + n). Each is truncated at the prompt's
  /// stop sequences. The cache is consulted before, and filled after, every
  /// backend request.
  std::vector<Completion> complete(const RenderedPrompt& prompt, const SamplingParams& params,
                                   std::string_view run_id = "default", std::size_t first_sample = 0);

  /// Registers a run with zero usage.
  void begin_run(const std::string& run_id);
  /// Throws UnknownRun.
  UsageReport record_usage(std::string_view run_id) const;

  std::string backend_id() const { return backend_->id(); }
  Backend& backend() noexcept { return *backend_; }

 private:
  Completion one(const RenderedPrompt& prompt, const SamplingParams& params, std::string_view run_id,
                 std::size_t sample_index);
  BackendReply request_with_retry(const CompletionRequest& req, std::string_view run_id);
  BackendUsage& usage_locked(std::string_view run_id);

  std::shared_ptr<Backend> backend_;
  Options options_;
  std::array<std::mutex, 64> key_locks_;
  mutable std::mutex usage_mu_;
  std::map<std::string, BackendUsage, std::less<>> usage_;
  std::uint64_t budget_requests_ = 0;
  std::uint64_t budget_tokens_ = 0;
};

/// Serves nothing; every request fails with CacheMiss. Used for offline
/// replay where all completions must come from the cache.
class OfflineBackend final : public Backend {
 public:
  explicit OfflineBackend(std::string id) : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  BackendReply complete(const CompletionRequest& request) override;

 private:
  std::string id_;
};

}  // namespace nlidisc
