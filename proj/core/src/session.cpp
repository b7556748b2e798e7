#include "nlidisc/session.hpp"

#include <fstream>
#include <sstream>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/rng.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

namespace {

using nlohmann::json;

std::string first_text(const std::vector<Completion>& completions) {
  return completions.empty() ? std::string() : trim(completions.front().text);
}

Label label_field(const json& j, const char* key) {
  auto l = label_from_string(j.at(key).get<std::string>());
  if (!l) throw Error(Errc::schema_error, std::string(key) + ": unknown label");
  return *l;
}

SessionState state_from_json(const json& j) {
  SessionState s;
  s.session_id = j.at("session_id").get<std::string>();
  s.problem = problem_from_json(j.at("problem"));
  auto mode = mode_from_string(j.at("mode").get<std::string>());
  if (!mode) throw Error(Errc::schema_error, "unknown mode");
  s.mode = *mode;
  for (const auto& ex : j.at("exemplars")) s.exemplars.push_back(exemplar_from_json(ex));
  auto phase = phase_from_string(j.at("phase").get<std::string>());
  if (!phase) throw Error(Errc::schema_error, "unknown phase");
  s.phase = *phase;
  s.initial_system_label = label_field(j, "initial_system_label");
  for (const auto& u : j.at("history")) {
    Utterance out;
    out.index = s.history.size();
    auto speaker = speaker_from_string(u.at("speaker").get<std::string>());
    if (!speaker) throw Error(Errc::schema_error, "unknown speaker");
    out.speaker = *speaker;
    out.text = u.at("text").get<std::string>();
    s.history.push_back(std::move(out));
  }
  if (j.contains("final_label") && !j.at("final_label").is_null()) s.final_label = label_field(j, "final_label");
  if (j.contains("human_label") && !j.at("human_label").is_null()) s.human_label = label_field(j, "human_label");
  s.base = prompt_from_json(j.at("base"));
  s.finalize_attempts = j.value("finalize_attempts", 0);
  return s;
}

}  // namespace

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::predicted: return "predicted";
    case Phase::discussing: return "discussing";
    case Phase::finalized: return "finalized";
  }
  return "";
}

std::optional<Phase> phase_from_string(std::string_view text) noexcept {
  for (auto p : {Phase::predicted, Phase::discussing, Phase::finalized})
    if (to_string(p) == text) return p;
  return std::nullopt;
}

SessionState start_session(std::string session_id, const NLIProblem& problem, PromptMode mode,
                           std::vector<Exemplar> exemplars, SessionContext& ctx) {
  check(ctx.prompts);
  const RenderedPrompt task = render_task_prompt(mode, exemplars, problem, ctx.prompts);
  const auto completions = ctx.gateway.complete(task, ctx.params.with_samples(1), ctx.run_id);

  SessionState s;
  s.session_id = std::move(session_id);
  s.problem = problem;
  s.mode = mode;
  s.exemplars = std::move(exemplars);
  s.phase = Phase::predicted;
  s.initial_system_label = parse_label(completions.front().text);
  s.base = with_prediction(task, s.initial_system_label);
  return s;
}

SessionState human_turn(const SessionState& state, const std::string& text, SessionContext& ctx,
                        std::optional<Label> declared_label) {
  if (state.phase == Phase::finalized) throw Error(Errc::session_finalized, state.session_id);
  const std::string human = trim(text);
  if (human.empty()) throw Error(Errc::empty_utterance, "human turn text is empty");

  const RenderedPrompt prompt = render_session_turn(state.base, state.history, human);
  const std::string reply = first_text(ctx.gateway.complete(prompt, ctx.params.with_samples(1), ctx.run_id));
  if (reply.empty()) throw Error(Errc::backend_unavailable, "system produced an empty reply");

  SessionState next = state;
  next.history.push_back(Utterance{next.history.size(), Speaker::human, human, std::nullopt});
  next.history.push_back(Utterance{next.history.size(), Speaker::system, reply, std::nullopt});
  next.phase = Phase::discussing;
  if (declared_label) {
    next.human_label = declared_label;
  } else if (!next.human_label) {
    try {
      next.human_label = parse_label(human);
    } catch (const Error&) {
      // Undeclared positions stay unknown until a later turn names one.
    }
  }
  return next;
}

SessionState finalize(const SessionState& state, SessionContext& ctx) {
  if (state.phase == Phase::finalized) throw Error(Errc::session_finalized, state.session_id);
  if (state.phase != Phase::discussing)
    throw Error(Errc::invalid_phase, "finalize requires at least one discussion turn");
  const RenderedPrompt prompt = render_finalize(state.base, state.history, ctx.prompts);
  const auto completions =
      ctx.gateway.complete(prompt, ctx.params.with_samples(1), ctx.run_id, static_cast<std::size_t>(state.finalize_attempts));
  SessionState next = state;
  next.final_label = parse_label(completions.front().text);
  next.phase = Phase::finalized;
  next.finalize_attempts = state.finalize_attempts + 1;
  return next;
}

DiscussionRecord session_record(const SessionState& state, const std::string& created_at) {
  if (state.phase != Phase::finalized || !state.final_label)
    throw Error(Errc::invariant_violation, "session is not finalized");
  if (!state.human_label) throw Error(Errc::invariant_violation, "human label was never declared");
  DiscussionRecord r;
  r.problem_id = state.problem.id;
  r.participant_labels = {{Speaker::system, state.initial_system_label}, {Speaker::human, *state.human_label}};
  r.final_label = *state.final_label;
  r.utterances = state.history;
  r.provenance = Provenance::session;
  r.created_at = created_at;
  validate(r);
  return r;
}

json to_json(const SessionState& s) {
  json exemplars = json::array();
  for (const auto& ex : s.exemplars) exemplars.push_back(to_json(ex));
  json history = json::array();
  for (const auto& u : s.history) history.push_back({{"speaker", to_string(u.speaker)}, {"text", u.text}});
  return {{"session_id", s.session_id},
          {"problem", to_json(s.problem)},
          {"mode", to_string(s.mode)},
          {"exemplars", std::move(exemplars)},
          {"phase", to_string(s.phase)},
          {"initial_system_label", to_string(s.initial_system_label)},
          {"history", std::move(history)},
          {"final_label", s.final_label ? json(to_string(*s.final_label)) : json(nullptr)},
          {"human_label", s.human_label ? json(to_string(*s.human_label)) : json(nullptr)},
          {"base", to_json(s.base)},
          {"finalize_attempts", s.finalize_attempts}};
}

SessionEventLog::SessionEventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void SessionEventLog::append(const json& event) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::io_error, "cannot append to " + path_.string());
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error(Errc::io_error, "short write to " + path_.string());
}

json start_event(const SessionState& state, json extra) {
  return {{"event", "start"}, {"session_id", state.session_id}, {"state", to_json(state)}, {"extra", std::move(extra)}};
}

json transition_event(const SessionState& before, const SessionState& after) {
  if (after.history.size() == before.history.size() + 2) {
    json e = {{"event", "turn"},
              {"session_id", after.session_id},
              {"human", after.history[after.history.size() - 2].text},
              {"system", after.history.back().text}};
    if (after.human_label) e["human_label"] = to_string(*after.human_label);
    return e;
  }
  if (after.phase == Phase::finalized && after.final_label) {
    return {{"event", "finalize"},
            {"session_id", after.session_id},
            {"final_label", to_string(*after.final_label)},
            {"attempts", after.finalize_attempts}};
  }
  return {{"event", "finalize_failed"}, {"session_id", after.session_id}, {"attempts", after.finalize_attempts}};
}

std::map<std::string, SessionEventLog::Replayed> SessionEventLog::replay(const std::filesystem::path& path) {
  std::map<std::string, Replayed> sessions;
  std::ifstream in(path);
  if (!in) return sessions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json e;
    try {
      e = json::parse(line);
    } catch (const json::parse_error&) {
      // A crash can leave a torn final line; everything before it stands.
      break;
    }
    try {
      const std::string type = e.at("event").get<std::string>();
      const std::string id = e.at("session_id").get<std::string>();
      if (type == "start") {
        sessions[id] = Replayed{state_from_json(e.at("state")), e.value("extra", json::object())};
        continue;
      }
      auto it = sessions.find(id);
      if (it == sessions.end()) throw Error(Errc::unknown_session, id);
      SessionState& s = it->second.state;
      if (type == "turn") {
        s.history.push_back(Utterance{s.history.size(), Speaker::human, e.at("human").get<std::string>(), std::nullopt});
        s.history.push_back(Utterance{s.history.size(), Speaker::system, e.at("system").get<std::string>(), std::nullopt});
        s.phase = Phase::discussing;
        if (e.contains("human_label")) s.human_label = label_field(e, "human_label");
      } else if (type == "finalize") {
        s.final_label = label_field(e, "final_label");
        s.phase = Phase::finalized;
        s.finalize_attempts = e.at("attempts").get<int>();
      } else if (type == "finalize_failed") {
        s.finalize_attempts = e.at("attempts").get<int>();
      } else if (type == "annotate") {
        it->second.extra.merge_patch(e.at("extra"));
      }
    } catch (const json::exception& ex) {
      throw Error(Errc::malformed_line, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return sessions;
}

std::string_view to_string(ScenarioKind kind) noexcept {
  return kind == ScenarioKind::acceptance ? "acceptance" : "objection";
}

bool scenario_success(ScenarioKind kind, Label gold, Label initial, Label final_label) noexcept {
  if (kind == ScenarioKind::acceptance) return final_label == gold && gold != initial;
  return final_label == gold && gold == initial;
}

Label argued_label(ScenarioKind kind, Label gold, std::uint64_t seed) noexcept {
  if (kind == ScenarioKind::acceptance) return gold;
  std::vector<Label> wrong;
  for (Label l : kAllLabels)
    if (l != gold) wrong.push_back(l);
  Rng rng(seed);
  return wrong[rng.below(wrong.size())];
}

TemplateAgent::TemplateAgent(int turns) : turns_(turns) {
  if (turns < 1) throw Error(Errc::invalid_argument, "agent needs at least one turn");
}

std::optional<std::string> TemplateAgent::next_utterance(const SessionState& state, ScenarioKind, Label argued,
                                                         int turn_index) {
  if (turn_index >= turns_) return std::nullopt;
  const std::string label(to_string(argued));
  if (turn_index == 0) {
    return "Let's discuss it more. I think " + label + ", because the hypothesis should be read against \"" +
           state.problem.premise + "\"";
  }
  return "I still think it is " + label + ". Please consider the premise again.";
}

ScenarioOutcome drive_scenario(SessionState state, ScenarioKind kind, ScriptedAgent& agent, SessionContext& ctx,
                               const ScenarioOptions& options, SessionState* final_state) {
  if (options.turn_budget < 1) throw Error(Errc::invalid_argument, "turn budget must be positive");
  if (state.phase != Phase::predicted) throw Error(Errc::invalid_phase, "scenario must start from a fresh session");
  const NLIProblem& problem = state.problem;

  ScenarioOutcome out;
  out.problem_id = problem.id;
  out.kind = kind;
  out.gold_label = problem.gold_label;
  out.initial_label = state.initial_system_label;
  out.argued_label = argued_label(kind, problem.gold_label, derive_seed(options.seed, fnv1a64(problem.id)));
  out.kind_mismatch = (kind == ScenarioKind::acceptance) == (state.initial_system_label == problem.gold_label);

  for (int turn = 0;; ++turn) {
    auto text = agent.next_utterance(state, kind, out.argued_label, turn);
    if (!text) break;
    if (turn >= options.turn_budget) {
      out.budget_exhausted = true;
      break;
    }
    state = human_turn(state, *text, ctx, out.argued_label);
    out.turns = turn + 1;
  }
  if (state.phase == Phase::predicted) {
    // An agent that never speaks still gets one opening turn so the
    // session can be finalized.
    state = human_turn(state, "Let's discuss it more. I think " + std::string(to_string(out.argued_label)) + ".", ctx,
                       out.argued_label);
    out.turns = 1;
  }
  state = finalize(state, ctx);
  out.final_label = *state.final_label;
  out.success = scenario_success(kind, problem.gold_label, out.initial_label, out.final_label);
  if (final_state != nullptr) *final_state = state;
  return out;
}

ScenarioOutcome run_scenario(const NLIProblem& problem, ScenarioKind kind, ScriptedAgent& agent, PromptMode mode,
                             std::vector<Exemplar> exemplars, SessionContext& ctx, const ScenarioOptions& options,
                             SessionState* final_state) {
  if (options.turn_budget < 1) throw Error(Errc::invalid_argument, "turn budget must be positive");
  const std::string id = options.session_id.empty() ? "scenario-" + problem.id : options.session_id;
  SessionState state = start_session(id, problem, mode, std::move(exemplars), ctx);
  return drive_scenario(std::move(state), kind, agent, ctx, options, final_state);
}

json to_json(const ScenarioOutcome& o) {
  return {{"problem_id", o.problem_id},
          {"kind", to_string(o.kind)},
          {"gold_label", to_string(o.gold_label)},
          {"initial_label", to_string(o.initial_label)},
          {"final_label", to_string(o.final_label)},
          {"argued_label", to_string(o.argued_label)},
          {"success", o.success},
          {"turns", o.turns},
          {"kind_mismatch", o.kind_mismatch},
          {"budget_exhausted", o.budget_exhausted}};
}

}  // namespace nlidisc
