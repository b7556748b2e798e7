#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlidisc/corpus.hpp"
#include "nlidisc/gateway.hpp"
#include "nlidisc/prompting.hpp"
#include "nlidisc/transcript.hpp"

namespace nlidisc {

enum class Phase { predicted, discussing, finalized };
std::string_view to_string(Phase phase) noexcept;
std::optional<Phase> phase_from_string(std::string_view text) noexcept;

/// A live human-system discussion. Transitions run
/// predicted -> discussing -> finalized and nothing else.
struct SessionState {
  std::string session_id;
  NLIProblem problem;
  PromptMode mode = PromptMode::zero_shot;
  std::vector<Exemplar> exemplars;
  Phase phase = Phase::predicted;
  Label initial_system_label = Label::neutral;
  /// Alternating human/system utterances, human first.
  std::vector<Utterance> history;
  /// Set iff phase == finalized.
  std::optional<Label> final_label;
  /// The label the human argues for, when declared or readable from the
  /// first human turn.
  std::optional<Label> human_label;
  /// Task prompt with the initial prediction filled in.
  RenderedPrompt base;
  int finalize_attempts = 0;

  bool operator==(const SessionState&) const = default;
};

/// Collaborators shared by the session operations.
struct SessionContext {
  Gateway& gateway;
  SamplingParams params;
  PromptConfig prompts;
  std::string run_id = "session";
};

/// Samples one prediction for the problem. Throws NoLabelFound when the
/// reply holds no label, and propagates gateway errors.
SessionState start_session(std::string session_id, const NLIProblem& problem, PromptMode mode,
                           std::vector<Exemplar> exemplars, SessionContext& ctx);

/// Appends the human utterance and one system reply. Throws
/// SessionFinalized or EmptyUtterance; on any error `state` is untouched.
SessionState human_turn(const SessionState& state, const std::string& text, SessionContext& ctx,
                        std::optional<Label> declared_label = std::nullopt);

/// Elicits the final label using sample index state.finalize_attempts.
/// Throws SessionFinalized, InvalidPhase (no discussion yet) or
/// NoLabelFound. A caller retrying after NoLabelFound bumps
/// finalize_attempts first so the retry draws a fresh sample.
SessionState finalize(const SessionState& state, SessionContext& ctx);

/// The finished discussion as a record with participants {system: initial
/// label, human: argued label}. Throws InvariantViolation when the session
/// is not finalized or the labels do not form a valid record.
DiscussionRecord session_record(const SessionState& state, const std::string& created_at);

nlohmann::json to_json(const SessionState& state);

/// Append-only JSONL log with one event per state transition:
///   {"event": "start", "session_id", "state": {...}, "extra": {...}}
///   {"event": "turn", "session_id", "human": str, "system": str, "human_label": str?}
///   {"event": "finalize", "session_id", "final_label": str, "attempts": int}
///   {"event": "finalize_failed", "session_id", "attempts": int}
///   {"event": "annotate", "session_id", "extra": {...}}  (merge-patched into extra)
class SessionEventLog {
 public:
  explicit SessionEventLog(std::filesystem::path path);

  void append(const nlohmann::json& event);
  const std::filesystem::path& path() const noexcept { return path_; }

  struct Replayed {
    SessionState state;
    nlohmann::json extra;
  };
  /// Rebuilds every session from the log; missing file yields nothing.
  static std::map<std::string, Replayed> replay(const std::filesystem::path& path);

 private:
  std::mutex mu_;
  std::filesystem::path path_;
};

nlohmann::json start_event(const SessionState& state, nlohmann::json extra = nlohmann::json::object());
/// Event describing the transition from `before` to `after`.
nlohmann::json transition_event(const SessionState& before, const SessionState& after);

enum class ScenarioKind { acceptance, objection };
std::string_view to_string(ScenarioKind kind) noexcept;

struct ScenarioOutcome {
  std::string problem_id;
  ScenarioKind kind = ScenarioKind::acceptance;
  Label gold_label = Label::neutral;
  Label initial_label = Label::neutral;
  Label final_label = Label::neutral;
  Label argued_label = Label::neutral;
  bool success = false;
  int turns = 0;
  /// Acceptance run on an initially correct system, or objection on an
  /// initially wrong one.
  bool kind_mismatch = false;
  bool budget_exhausted = false;
};

/// acceptance: final == gold != initial; objection: final == gold == initial.
bool scenario_success(ScenarioKind kind, Label gold, Label initial, Label final_label) noexcept;

/// The label a human argues: gold under acceptance, a seeded wrong label
/// under objection.
Label argued_label(ScenarioKind kind, Label gold, std::uint64_t seed) noexcept;

/// Supplies the human side of a scenario.
class ScriptedAgent {
 public:
  virtual ~ScriptedAgent() = default;
  /// Next utterance, or nullopt when the human is done arguing.
  virtual std::optional<std::string> next_utterance(const SessionState& state, ScenarioKind kind,
                                                    Label argued, int turn_index) = 0;
};

/// Opens with "Let's discuss it more. I think <label>, because ..." and
/// then repeats the position for a fixed number of turns.
class TemplateAgent final : public ScriptedAgent {
 public:
  explicit TemplateAgent(int turns = 2);
  std::optional<std::string> next_utterance(const SessionState& state, ScenarioKind kind, Label argued,
                                            int turn_index) override;

 private:
  int turns_;
};

struct ScenarioOptions {
  int turn_budget = 8;
  std::string session_id;
  std::uint64_t seed = 0;
};

/// Runs start -> human turns -> finalize for one problem.
ScenarioOutcome run_scenario(const NLIProblem& problem, ScenarioKind kind, ScriptedAgent& agent, PromptMode mode,
                             std::vector<Exemplar> exemplars, SessionContext& ctx, const ScenarioOptions& options = {},
                             SessionState* final_state = nullptr);

/// Continues a freshly started session through the human turns and
/// finalize. Throws InvalidPhase if the session already has a discussion.
ScenarioOutcome drive_scenario(SessionState state, ScenarioKind kind, ScriptedAgent& agent, SessionContext& ctx,
                               const ScenarioOptions& options = {}, SessionState* final_state = nullptr);

nlohmann::json to_json(const ScenarioOutcome& outcome);

}  // namespace nlidisc
