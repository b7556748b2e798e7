#include "nlidisc/api_service.hpp"

#include "httplib.h"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <shared_mutex>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/rng.hpp"
#include "nlidisc/session.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

int status_for(Errc code) {
  switch (code) {
    case Errc::unknown_session:
      return 404;
    case Errc::session_finalized:
    case Errc::invalid_phase:
      return 409;
    case Errc::empty_utterance:
    case Errc::empty_history:
    case Errc::insufficient_problems:
    case Errc::invariant_violation:
      return 422;
    case Errc::backend_unavailable:
    case Errc::transient_backend:
    case Errc::auth_error:
    case Errc::budget_exceeded:
    case Errc::cache_miss:
    case Errc::no_label_found:
    case Errc::ambiguous_label:
      return 502;
    default:
      return 400;
  }
}

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

std::string counter_id(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

// Numeric suffix of ids minted by counter_id, 0 otherwise.
std::uint64_t id_number(const std::string& id) {
  auto dash = id.rfind('-');
  if (dash == std::string::npos) return 0;
  std::uint64_t n = 0;
  for (std::size_t i = dash + 1; i < id.size(); ++i) {
    if (id[i] < '0' || id[i] > '9') return 0;
    n = n * 10 + static_cast<std::uint64_t>(id[i] - '0');
  }
  return n;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string::npos) end = path.size();
    if (end > start) parts.push_back(path.substr(start, end - start));
    start = end + 1;
  }
  return parts;
}

bool truthy(const std::map<std::string, std::string>& query, const std::string& key) {
  auto it = query.find(key);
  return it != query.end() && (it->second == "1" || to_lower(it->second) == "true");
}

json problem_view(const NLIProblem& p, bool show_label) {
  json j = {{"id", p.id}, {"premise", p.premise}, {"hypothesis", p.hypothesis}, {"source", to_string(p.source)}};
  if (show_label) j["label"] = to_string(p.gold_label);
  return j;
}

}  // namespace

struct ApiService::Impl {
  struct Entry {
    std::mutex mu;
    SessionState state;
    json extra;
  };

  std::shared_ptr<Gateway> gateway;
  ServiceOptions options;
  std::map<std::string, NLIProblem> problems;
  std::unique_ptr<SessionEventLog> log;

  mutable std::shared_mutex store_mu;
  std::map<std::string, std::shared_ptr<Entry>> sessions;
  std::map<std::string, std::vector<std::string>> batches;
  std::atomic<std::uint64_t> next_session{1};
  std::atomic<std::uint64_t> next_batch{1};

  httplib::Server server;

  Impl(std::shared_ptr<Gateway> gw, ServiceOptions opts) : gateway(std::move(gw)), options(std::move(opts)) {
    if (!gateway) throw Error(Errc::invalid_argument, "service needs a gateway");
    if (!options.clock) options.clock = utc_now_iso8601;
    for (const auto& p : options.problems)
      if (!problems.emplace(p.id, p).second) throw Error(Errc::duplicate_id, "problem id '" + p.id + "'");
    if (options.event_log) {
      std::uint64_t max_session = 0, max_batch = 0;
      for (auto& [id, replayed] : SessionEventLog::replay(*options.event_log)) {
        auto e = std::make_shared<Entry>();
        e->state = std::move(replayed.state);
        e->extra = std::move(replayed.extra);
        if (e->extra.contains("batch")) {
          const auto batch = e->extra["batch"].get<std::string>();
          batches[batch].push_back(id);
          max_batch = std::max(max_batch, id_number(batch));
        }
        max_session = std::max(max_session, id_number(id));
        sessions.emplace(id, std::move(e));
      }
      next_session = max_session + 1;
      next_batch = max_batch + 1;
      log = std::make_unique<SessionEventLog>(*options.event_log);
    }
  }

  SessionContext context() { return SessionContext{*gateway, options.params.with_samples(1), options.prompts, "api"}; }

  void append(const json& event) {
    if (log) log->append(event);
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(store_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(Errc::unknown_session, "no session '" + id + "'");
    return it->second;
  }

  static json envelope(const SessionState& s, const json& extra) {
    const bool blind = extra.value("blind", false);
    const bool gold_known = extra.value("gold_known", true);
    json history = json::array();
    for (const auto& u : s.history) history.push_back({{"speaker", to_string(u.speaker)}, {"text", u.text}});
    json j = {{"session_id", s.session_id},
              {"problem", problem_view(s.problem, !blind && gold_known)},
              {"mode", to_string(s.mode)},
              {"blind", blind},
              {"phase", to_string(s.phase)},
              {"history", history},
              {"finalize_attempts", s.finalize_attempts}};
    if (!blind) j["initial_system_label"] = to_string(s.initial_system_label);
    if (s.final_label) j["final_label"] = to_string(*s.final_label);
    if (s.human_label) j["human_label"] = to_string(*s.human_label);
    if (extra.contains("argue_for")) j["argue_for"] = extra["argue_for"];
    if (extra.contains("batch")) j["batch_id"] = extra["batch"];
    if (!blind && extra.contains("scenario")) j["scenario"] = extra["scenario"];
    if (extra.contains("tags")) j["tags"] = extra["tags"];
    return j;
  }

  // ------------------------------------------------------------------ routes

  const NLIProblem& problem_by_id(const std::string& id) const {
    auto it = problems.find(id);
    if (it == problems.end()) throw HttpError{404, "UnknownProblem", "no problem '" + id + "'"};
    return it->second;
  }

  static PromptMode mode_of(const json& body) {
    const std::string text = body.value("mode", "zero-shot");
    auto mode = mode_from_string(text);
    if (!mode) throw HttpError{400, "InvalidArgument", "unknown mode '" + text + "'"};
    return *mode;
  }

  std::vector<Exemplar> exemplars_for(PromptMode mode) const {
    if (mode == PromptMode::zero_shot) return {};
    return options.exemplars;
  }

  SessionState start(const NLIProblem& problem, PromptMode mode) {
    auto ctx = context();
    return start_session(counter_id("s", next_session++), problem, mode, exemplars_for(mode), ctx);
  }

  // Stores and logs a freshly started session.
  std::pair<std::string, json> create(SessionState state, json extra) {
    const std::string id = state.session_id;
    auto entry = std::make_shared<Entry>();
    entry->state = std::move(state);
    extra["created_at"] = options.clock();
    entry->extra = std::move(extra);
    {
      std::unique_lock lock(store_mu);
      append(start_event(entry->state, entry->extra));
      sessions.emplace(id, entry);
      if (entry->extra.contains("batch")) batches[entry->extra["batch"].get<std::string>()].push_back(id);
    }
    return {id, envelope(entry->state, entry->extra)};
  }

  ApiResponse post_sessions(const json& body) {
    const PromptMode mode = mode_of(body);
    json extra = {{"blind", body.value("blind", false)}, {"gold_known", true}};
    NLIProblem problem;
    if (body.contains("problem_id")) {
      problem = problem_by_id(body.at("problem_id").get<std::string>());
    } else if (body.contains("problem")) {
      const auto& p = body.at("problem");
      problem.premise = trim(p.at("premise").get<std::string>());
      problem.hypothesis = trim(p.at("hypothesis").get<std::string>());
      if (problem.premise.empty() || problem.hypothesis.empty())
        throw HttpError{400, "InvalidArgument", "premise and hypothesis must be non-empty"};
      if (p.contains("label")) {
        auto label = label_from_string(p.at("label").get<std::string>());
        if (!label) throw Error(Errc::unknown_label, p.at("label").get<std::string>());
        problem.gold_label = *label;
      } else {
        extra["gold_known"] = false;
      }
      problem.id = p.value("id", "inline-" + sha256_hex(problem.premise + "\n" + problem.hypothesis).substr(0, 12));
      problem.source = Source::custom;
    } else {
      throw HttpError{400, "InvalidArgument", "body needs problem_id or problem"};
    }
    auto [id, env] = create(start(problem, mode), std::move(extra));
    return {201, env};
  }

  ApiResponse list_sessions() const {
    std::shared_lock lock(store_mu);
    json arr = json::array();
    for (const auto& [id, e] : sessions) {
      std::lock_guard g(e->mu);
      arr.push_back({{"session_id", id}, {"phase", to_string(e->state.phase)}, {"problem_id", e->state.problem.id}});
    }
    return {200, {{"sessions", arr}}};
  }

  ApiResponse get_session(const std::string& id) const {
    auto e = find(id);
    std::lock_guard g(e->mu);
    return {200, envelope(e->state, e->extra)};
  }

  // Runs `fn` under the session lock; a session busy with another request
  // answers 409 right away instead of queueing.
  template <typename Fn>
  ApiResponse mutate(const std::string& id, Fn&& fn) {
    auto e = find(id);
    std::unique_lock g(e->mu, std::try_to_lock);
    if (!g.owns_lock()) throw HttpError{409, "SessionBusy", "another request is in flight for this session"};
    return fn(*e);
  }

  ApiResponse post_turn(const std::string& id, const json& body) {
    if (!body.contains("text") || !body.at("text").is_string())
      throw HttpError{400, "InvalidArgument", "body needs a text string"};
    std::optional<Label> declared;
    if (body.contains("label")) {
      auto l = label_from_string(body.at("label").get<std::string>());
      if (!l) throw Error(Errc::unknown_label, body.at("label").get<std::string>());
      declared = *l;
    }
    return mutate(id, [&](Entry& e) {
      auto ctx = context();
      if (!declared && e.extra.contains("argue_for")) declared = label_from_string(e.extra["argue_for"].get<std::string>());
      auto next = human_turn(e.state, body.at("text").get<std::string>(), ctx, declared);
      append(transition_event(e.state, next));
      e.state = std::move(next);
      return ApiResponse{200, envelope(e.state, e.extra)};
    });
  }

  ApiResponse post_finalize(const std::string& id) {
    return mutate(id, [&](Entry& e) {
      auto ctx = context();
      try {
        auto next = finalize(e.state, ctx);
        append(transition_event(e.state, next));
        e.state = std::move(next);
      } catch (const Error& err) {
        if (err.code() != Errc::no_label_found && err.code() != Errc::ambiguous_label) throw;
        // Stay in discussion; the next attempt draws a fresh sample.
        SessionState next = e.state;
        ++next.finalize_attempts;
        append(transition_event(e.state, next));
        e.state = std::move(next);
        throw;
      }
      return ApiResponse{200, envelope(e.state, e.extra)};
    });
  }

  ApiResponse post_tags(const std::string& id, const json& body) {
    if (!body.contains("tags") || !body.at("tags").is_array())
      throw HttpError{400, "InvalidArgument", "body needs a tags array"};
    return mutate(id, [&](Entry& e) {
      if (e.state.phase != Phase::finalized) throw Error(Errc::invalid_phase, "tags are accepted after finalize");
      const auto& tags = body.at("tags");
      if (tags.size() != e.state.history.size())
        throw HttpError{422, "InvalidArgument", "expected one tag per utterance"};
      for (const auto& t : tags)
        if (!t.is_null() && (!t.is_string() || !tag_from_string(t.get<std::string>())))
          throw HttpError{422, "InvalidArgument", "unknown tag " + t.dump()};
      json patch = {{"tags", tags}};
      append({{"event", "annotate"}, {"session_id", id}, {"extra", patch}});
      e.extra.merge_patch(patch);
      return ApiResponse{200, envelope(e.state, e.extra)};
    });
  }

  ApiResponse get_export(const std::string& id) const {
    auto e = find(id);
    std::lock_guard g(e->mu);
    if (e->state.phase != Phase::finalized) throw Error(Errc::invalid_phase, "session is not finalized");
    auto record = session_record(e->state, e->extra.value("created_at", ""));
    if (e->extra.contains("tags"))
      for (std::size_t i = 0; i < record.utterances.size(); ++i) {
        const auto& t = e->extra["tags"][i];
        if (!t.is_null()) record.utterances[i].tag = tag_from_string(t.get<std::string>());
      }
    return {200, to_json(record)};
  }

  std::vector<NLIProblem> filtered(const std::string& filter) const {
    if (filter.empty() || filter == "none") return options.problems;
    if (filter != "three-of-five") throw HttpError{400, "InvalidArgument", "unknown filter '" + filter + "'"};
    return filter_three_of_five(options.problems).kept;
  }

  ApiResponse get_sample(const std::map<std::string, std::string>& query) const {
    auto get = [&](const char* k, const std::string& d) {
      auto it = query.find(k);
      return it == query.end() ? d : it->second;
    };
    std::size_t n = 0;
    std::uint64_t seed = 0;
    try {
      n = std::stoull(get("n", "5"));
      seed = std::stoull(get("seed", std::to_string(options.seed)));
    } catch (const std::exception&) {
      throw HttpError{400, "InvalidArgument", "n and seed must be non-negative integers"};
    }
    const bool blind = truthy(query, "blind");
    auto pool = filtered(get("filter", ""));
    json arr = json::array();
    for (const auto& p : sample_problems(pool, n, seed)) arr.push_back(problem_view(p, !blind));
    return {200, {{"problems", arr}}};
  }

  ApiResponse post_scenarios(const json& body) {
    const PromptMode mode = mode_of(body);
    const bool blind = body.value("blind", true);
    const std::uint64_t seed = body.value("seed", options.seed);
    std::vector<NLIProblem> chosen;
    if (body.contains("problem_ids")) {
      for (const auto& id : body.at("problem_ids")) chosen.push_back(problem_by_id(id.get<std::string>()));
    } else {
      chosen = sample_problems(filtered(body.value("filter", "")), body.value("n", std::size_t{10}), seed);
    }
    if (chosen.empty()) throw HttpError{422, "InvalidArgument", "scenario batch needs at least one problem"};

    // Planned half/half split; the initial prediction may force the other kind.
    std::vector<std::size_t> order(chosen.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x5CE4A210));
    rng.shuffle(std::span(order));
    std::vector<ScenarioKind> planned(chosen.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      planned[order[i]] = i < (chosen.size() + 1) / 2 ? ScenarioKind::acceptance : ScenarioKind::objection;

    const std::string batch = counter_id("b", next_batch++);
    json out = json::array();
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const auto& p = chosen[i];
      // The initial prediction decides which scenario is possible.
      auto state = start(p, mode);
      const auto kind =
          state.initial_system_label == p.gold_label ? ScenarioKind::objection : ScenarioKind::acceptance;
      const Label argue = argued_label(kind, p.gold_label, derive_seed(seed, fnv1a64(p.id)));
      json extra = {{"blind", blind},
                    {"gold_known", true},
                    {"batch", batch},
                    {"scenario", to_string(kind)},
                    {"planned", to_string(planned[i])},
                    {"argue_for", to_string(argue)}};
      auto [id, env] = create(std::move(state), std::move(extra));
      out.push_back({{"session_id", id}, {"problem_id", p.id}, {"argue_for", to_string(argue)}});
    }
    return {201, {{"batch_id", batch}, {"blind", blind}, {"sessions", out}}};
  }

  std::vector<std::string> batch_sessions(const std::string& batch) const {
    std::shared_lock lock(store_mu);
    auto it = batches.find(batch);
    if (it == batches.end()) throw HttpError{404, "UnknownBatch", "no scenario batch '" + batch + "'"};
    return it->second;
  }

  ApiResponse get_batch(const std::string& batch) const {
    json arr = json::array();
    std::size_t done = 0;
    for (const auto& id : batch_sessions(batch)) {
      auto e = find(id);
      std::lock_guard g(e->mu);
      done += e->state.phase == Phase::finalized ? 1 : 0;
      arr.push_back({{"session_id", id},
                     {"problem_id", e->state.problem.id},
                     {"phase", to_string(e->state.phase)},
                     {"argue_for", e->extra.value("argue_for", "")}});
    }
    return {200, {{"batch_id", batch}, {"sessions", arr}, {"finalized", done}}};
  }

  ApiResponse get_outcomes(const std::string& batch) const {
    json arr = json::array();
    for (const auto& id : batch_sessions(batch)) {
      auto e = find(id);
      std::lock_guard g(e->mu);
      if (e->state.phase != Phase::finalized) continue;
      const auto& s = e->state;
      ScenarioOutcome o;
      o.problem_id = s.problem.id;
      o.kind = e->extra.value("scenario", "acceptance") == "acceptance" ? ScenarioKind::acceptance
                                                                         : ScenarioKind::objection;
      o.gold_label = s.problem.gold_label;
      o.initial_label = s.initial_system_label;
      o.final_label = *s.final_label;
      o.argued_label = label_from_string(e->extra.value("argue_for", "")).value_or(o.gold_label);
      o.success = scenario_success(o.kind, o.gold_label, o.initial_label, o.final_label);
      o.turns = static_cast<int>(s.history.size() / 2);
      o.kind_mismatch = (o.kind == ScenarioKind::acceptance) == (o.initial_label == o.gold_label);
      json j = to_json(o);
      j["session_id"] = id;
      j["planned"] = e->extra.value("planned", "");
      arr.push_back(j);
    }
    return {200, {{"batch_id", batch}, {"outcomes", arr}}};
  }

  ApiResponse route(const std::string& method, const std::string& path, const std::string& body_text,
                    const std::map<std::string, std::string>& query) {
    const auto parts = split_path(path);
    json body = json::object();
    if (method == "POST" && !trim(body_text).empty()) {
      try {
        body = json::parse(body_text);
      } catch (const json::parse_error& e) {
        throw HttpError{400, "InvalidJson", e.what()};
      }
      if (!body.is_object()) throw HttpError{400, "InvalidJson", "body must be a JSON object"};
    }
    const auto n = parts.size();
    if (method == "GET" && n == 1 && parts[0] == "health")
      return {200, {{"status", "ok"}, {"backend", gateway->backend_id()}}};
    if (n >= 1 && parts[0] == "problems") {
      if (method == "GET" && n == 2 && parts[1] == "sample") return get_sample(query);
      if (method == "GET" && n == 2) return {200, problem_view(problem_by_id(parts[1]), !truthy(query, "blind"))};
    }
    if (n >= 1 && parts[0] == "sessions") {
      if (n == 1 && method == "POST") return post_sessions(body);
      if (n == 1 && method == "GET") return list_sessions();
      if (n == 2 && method == "GET") return get_session(parts[1]);
      if (n == 3 && method == "POST" && parts[2] == "turns") return post_turn(parts[1], body);
      if (n == 3 && method == "POST" && parts[2] == "finalize") return post_finalize(parts[1]);
      if (n == 3 && method == "POST" && parts[2] == "tags") return post_tags(parts[1], body);
      if (n == 3 && method == "GET" && parts[2] == "export") return get_export(parts[1]);
    }
    if (n >= 1 && parts[0] == "scenarios") {
      if (n == 1 && method == "POST") return post_scenarios(body);
      if (n == 2 && method == "GET") return get_batch(parts[1]);
      if (n == 3 && method == "GET" && parts[2] == "outcomes") return get_outcomes(parts[1]);
    }
    throw HttpError{404, "NotFound", method + " " + path};
  }

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body,
                     const std::map<std::string, std::string>& query, const std::string& authorization) {
    if (method == "OPTIONS") return {204, nullptr};
    if (options.bearer_token && authorization != "Bearer " + *options.bearer_token)
      return error_response(401, "Unauthorized", "missing or wrong bearer token");
    try {
      return route(method, path, body, query);
    } catch (const HttpError& e) {
      return error_response(e.status, e.code, e.message);
    } catch (const Error& e) {
      return error_response(status_for(e.code()), std::string(errc_name(e.code())), e.what());
    } catch (const json::exception& e) {
      return error_response(400, "SchemaError", e.what());
    }
  }
};

ApiService::ApiService(std::shared_ptr<Gateway> gateway, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(gateway), std::move(options))) {
  auto& server = impl_->server;
  auto serve = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    auto out = handle(req.method, req.path, req.body, query, req.get_header_value("Authorization"));
    res.status = out.status;
    if (out.status != 204) res.set_content(out.body.dump(), "application/json");
  };
  server.Get(".*", serve);
  server.Post(".*", serve);
  server.Options(".*", serve);
  const std::string origin = impl_->options.cors_origin;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Headers", "Content-Type, Authorization"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
}

ApiService::~ApiService() { stop(); }

ApiResponse ApiService::handle(const std::string& method, const std::string& path, const std::string& body,
                               const std::map<std::string, std::string>& query, const std::string& authorization) {
  return impl_->handle(method, path, body, query, authorization);
}

int ApiService::bind(const std::string& host, int port) {
  if (port == 0) {
    int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::io_error, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void ApiService::listen() { impl_->server.listen_after_bind(); }

void ApiService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

std::size_t ApiService::session_count() const {
  std::shared_lock lock(impl_->store_mu);
  return impl_->sessions.size();
}

}  // namespace nlidisc
