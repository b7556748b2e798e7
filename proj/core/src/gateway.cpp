#include "nlidisc/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

/// Earliest label word starting at a word boundary in `lowered`.
std::optional<Label> earliest_label(std::string_view lowered) {
  std::size_t best_pos = std::string_view::npos;
  std::optional<Label> best;
  bool tie = false;
  for (Label label : kAllLabels) {
    const std::string_view word = to_string(label);
    std::size_t pos = lowered.find(word);
    while (pos != std::string_view::npos && pos > 0 && is_word_char(lowered[pos - 1]))
      pos = lowered.find(word, pos + 1);
    if (pos == std::string_view::npos) continue;
    if (pos < best_pos) {
      best_pos = pos;
      best = label;
      tie = false;
    } else if (pos == best_pos) {
      tie = true;
    }
  }
  if (tie) throw Error(Errc::ambiguous_label, "two label words at the same position");
  return best;
}

json completion_json(const Completion& c) {
  return {{"text", c.text},
          {"finish_reason", to_string(c.finish_reason)},
          {"backend_id", c.backend_id},
          {"latency_ms", c.latency_ms}};
}

Completion completion_from_json(const json& j) {
  Completion c;
  c.text = j.at("text").get<std::string>();
  const std::string reason = j.at("finish_reason").get<std::string>();
  c.finish_reason = reason == "length" ? FinishReason::length
                    : reason == "error" ? FinishReason::error
                                        : FinishReason::stop;
  c.backend_id = j.at("backend_id").get<std::string>();
  c.latency_ms = j.at("latency_ms").get<std::int64_t>();
  return c;
}

}  // namespace

void SamplingParams::validate() const {
  if (!(temperature >= 0.0)) throw Error(Errc::invalid_argument, "temperature must be >= 0");
  if (n_samples <= 0) throw Error(Errc::invalid_argument, "n_samples must be positive");
  if (max_tokens <= 0) throw Error(Errc::invalid_argument, "max_tokens must be positive");
}

std::string_view to_string(FinishReason reason) noexcept {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "";
}

std::string truncate_at_stop(std::string_view text, std::span<const std::string> stops, bool* truncated) {
  std::size_t cut = text.size();
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    cut = std::min(cut, text.find(stop));
  }
  if (truncated != nullptr) *truncated = cut < text.size();
  return std::string(text.substr(0, cut));
}

std::size_t estimate_tokens(std::string_view text) { return split_whitespace(text).size(); }

Label parse_label(std::string_view completion_text) {
  const std::string lowered = to_lower(completion_text);
  static constexpr std::string_view kMarker = "label:";
  std::vector<std::size_t> markers;
  for (std::size_t pos = lowered.find(kMarker); pos != std::string::npos; pos = lowered.find(kMarker, pos + 1))
    markers.push_back(pos);
  for (auto it = markers.rbegin(); it != markers.rend(); ++it) {
    if (auto label = earliest_label(std::string_view(lowered).substr(*it + kMarker.size()))) return *label;
  }
  if (auto label = earliest_label(lowered)) return *label;
  std::string excerpt(completion_text.substr(0, 80));
  throw Error(Errc::no_label_found, "no label word in \"" + excerpt + "\"");
}

std::string cache_key(std::string_view fingerprint, const SamplingParams& params,
                      std::string_view backend_id, std::size_t sample_index) {
  std::ostringstream temp;
  temp.precision(17);
  temp << params.temperature;
  Sha256 h;
  h.update_field("nlidisc-cache-v1")
      .update_field(fingerprint)
      .update_field(temp.str())
      .update_field(std::to_string(params.max_tokens))
      .update_field(params.seed ? std::to_string(*params.seed) : "-")
      .update_field(backend_id)
      .update_field(std::to_string(sample_index));
  return h.hex_digest();
}

std::optional<Completion> MemoryCache::get(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void MemoryCache::put(const std::string& key, const Completion& completion) {
  std::lock_guard lock(mu_);
  entries_[key] = completion;
}

std::size_t MemoryCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

DiskCache::DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path DiskCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<Completion> DiskCache::get(const std::string& key) {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    return completion_from_json(json::parse(in));
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void DiskCache::put(const std::string& key, const Completion& completion) {
  const auto target = path_for(key);
  std::filesystem::create_directories(target.parent_path());
  auto tmp = target;
  tmp += ".tmp" + std::to_string(::getpid()) + "-" +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write cache entry " + tmp.string());
    out << completion_json(completion).dump();
  }
  std::filesystem::rename(tmp, target);
}

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_), last_(Clock::now()) {
  if (!(requests_per_second > 0)) throw Error(Errc::invalid_argument, "rate must be positive");
}

void RateLimiter::acquire() {
  for (;;) {
    std::chrono::duration<double> wait{};
    {
      std::lock_guard lock(mu_);
      const auto now = Clock::now();
      tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    }
    std::this_thread::sleep_for(wait);
  }
}

Gateway::Gateway(std::shared_ptr<Backend> backend) : Gateway(std::move(backend), Options{}) {}

Gateway::Gateway(std::shared_ptr<Backend> backend, Options options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw Error(Errc::invalid_argument, "gateway needs a backend");
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void Gateway::begin_run(const std::string& run_id) {
  std::lock_guard lock(usage_mu_);
  usage_locked(run_id);
}

BackendUsage& Gateway::usage_locked(std::string_view run_id) {
  auto it = usage_.find(run_id);
  if (it == usage_.end()) {
    it = usage_.emplace(std::string(run_id), BackendUsage{}).first;
    it->second.tokens_estimated = backend_->estimates_tokens();
  }
  return it->second;
}

UsageReport Gateway::record_usage(std::string_view run_id) const {
  std::lock_guard lock(usage_mu_);
  auto it = usage_.find(run_id);
  if (it == usage_.end()) throw Error(Errc::unknown_run, std::string(run_id));
  UsageReport report;
  report.run_id = std::string(run_id);
  report.per_backend[backend_->id()] = it->second;
  return report;
}

BackendReply Gateway::request_with_retry(const CompletionRequest& req, std::string_view run_id) {
  for (int attempt = 0;; ++attempt) {
    {
      std::lock_guard lock(usage_mu_);
      const Budget& b = options_.budget;
      if (b.max_requests && budget_requests_ >= *b.max_requests)
        throw Error(Errc::budget_exceeded, "request ceiling " + std::to_string(*b.max_requests) + " reached");
      if (b.max_tokens && budget_tokens_ >= *b.max_tokens)
        throw Error(Errc::budget_exceeded, "token ceiling " + std::to_string(*b.max_tokens) + " reached");
      ++budget_requests_;
      ++usage_locked(run_id).requests;
    }
    if (options_.limiter) options_.limiter->acquire();
    try {
      return backend_->complete(req);
    } catch (const Error& e) {
      {
        std::lock_guard lock(usage_mu_);
        ++usage_locked(run_id).failures;
      }
      if (e.code() != Errc::transient_backend) throw;
      if (attempt >= options_.retry.max_retries)
        throw Error(Errc::backend_unavailable, backend_->id() + " failed after " +
                                                   std::to_string(attempt + 1) + " attempts: " + e.what());
      auto delay = options_.retry.base_delay * (1LL << std::min(attempt, 20));
      options_.sleep(std::min<std::chrono::milliseconds>(delay, options_.retry.max_delay));
    }
  }
}

Completion Gateway::one(const RenderedPrompt& prompt, const SamplingParams& params, std::string_view run_id,
                        std::size_t sample_index) {
  const std::string backend_id = backend_->id();
  const std::string key = cache_key(prompt.fingerprint, params, backend_id, sample_index);
  std::lock_guard key_lock(key_locks_[fnv1a64(key) % key_locks_.size()]);

  if (options_.cache) {
    if (auto hit = options_.cache->get(key)) {
      std::lock_guard lock(usage_mu_);
      ++usage_locked(run_id).cache_hits;
      return *hit;
    }
  }

  CompletionRequest req;
  req.prompt = prompt.text;
  req.stops = prompt.stop_sequences;
  req.kind = prompt.kind;
  req.fingerprint = prompt.fingerprint;
  req.temperature = params.temperature;
  req.max_tokens = params.max_tokens;
  req.seed = params.seed;
  req.sample_index = sample_index;

  const auto started = Clock::now();
  BackendReply reply = request_with_retry(req, run_id);
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started);

  Completion c;
  bool truncated = false;
  c.text = truncate_at_stop(reply.text, prompt.stop_sequences, &truncated);
  c.finish_reason = truncated ? FinishReason::stop : reply.finish_reason;
  if (c.text.empty()) c.finish_reason = FinishReason::error;
  c.backend_id = backend_id;
  c.latency_ms = elapsed.count();

  {
    std::lock_guard lock(usage_mu_);
    BackendUsage& u = usage_locked(run_id);
    const auto prompt_tokens =
        reply.prompt_tokens ? static_cast<std::uint64_t>(*reply.prompt_tokens) : estimate_tokens(prompt.text);
    const auto completion_tokens = reply.completion_tokens ? static_cast<std::uint64_t>(*reply.completion_tokens)
                                                           : estimate_tokens(reply.text);
    if (!reply.prompt_tokens || !reply.completion_tokens) u.tokens_estimated = true;
    u.prompt_tokens += prompt_tokens;
    u.completion_tokens += completion_tokens;
    budget_tokens_ += prompt_tokens + completion_tokens;
  }
  if (options_.cache) options_.cache->put(key, c);
  return c;
}

std::vector<Completion> Gateway::complete(const RenderedPrompt& prompt, const SamplingParams& params,
                                          std::string_view run_id, std::size_t first_sample) {
  params.validate();
  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(params.n_samples));
  for (int i = 0; i < params.n_samples; ++i)
    out.push_back(one(prompt, params, run_id, first_sample + static_cast<std::size_t>(i)));
  if (options_.artifacts) options_.artifacts->record(prompt, params, first_sample, out);
  return out;
}

BackendReply OfflineBackend::complete(const CompletionRequest& request) {
  throw Error(Errc::cache_miss, "offline replay has no cached completion for prompt " +
                                    request.fingerprint.substr(0, 12) + " sample " +
                                    std::to_string(request.sample_index));
}

}  // namespace nlidisc
