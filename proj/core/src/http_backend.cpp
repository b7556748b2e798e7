#include "httplib.h"

#include <nlohmann/json.hpp>

#include "nlidisc/backends.hpp"
#include "nlidisc/error.hpp"

namespace nlidisc {

namespace {
using nlohmann::json;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) throw Error(Errc::config_error, "http backend needs a model name");
}

std::string HttpBackend::id() const { return "http:" + config_.model; }

BackendReply HttpBackend::complete(const CompletionRequest& request) {
  json body = {{"model", config_.model}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
  if (config_.chat) {
    body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt}}});
  } else {
    body["prompt"] = request.prompt;
  }
  if (!request.stops.empty()) {
    // The common API limit is four stop sequences; the gateway truncates
    // locally as well, so extra stops are not lost.
    json stops = json::array();
    for (std::size_t i = 0; i < request.stops.size() && i < 4; ++i) stops.push_back(request.stops[i]);
    body["stop"] = std::move(stops);
  }

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) throw Error(Errc::transient_backend, "request failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403)
    throw Error(Errc::auth_error, "backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
  if (res->status == 429 || res->status >= 500)
    throw Error(Errc::transient_backend, "HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw Error(Errc::backend_unavailable, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));

  BackendReply reply;
  try {
    const json j = json::parse(res->body);
    const json& choice = j.at("choices").at(0);
    reply.text = config_.chat ? choice.at("message").at("content").get<std::string>()
                              : choice.at("text").get<std::string>();
    if (choice.value("finish_reason", "stop") == "length") reply.finish_reason = FinishReason::length;
    if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
      if (usage->contains("prompt_tokens")) reply.prompt_tokens = usage->at("prompt_tokens").get<std::int64_t>();
      if (usage->contains("completion_tokens"))
        reply.completion_tokens = usage->at("completion_tokens").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw Error(Errc::backend_unavailable, std::string("malformed backend response: ") + e.what());
  }
  return reply;
}

}  // namespace nlidisc
