#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlidisc/corpus.hpp"
#include "nlidisc/labels.hpp"
#include "nlidisc/transcript.hpp"

namespace nlidisc {

/// An in-context example. The discussion is only rendered in
/// few-shot-discussion mode, so one exemplar pack serves both few-shot modes.
struct Exemplar {
  NLIProblem problem;
  std::optional<DiscussionRecord> discussion;

  bool operator==(const Exemplar&) const = default;
};

enum class PromptKind { task, continuation, session_turn, finalize, pseudo_gen };

std::string_view to_string(PromptKind kind) noexcept;

struct RenderedPrompt {
  std::string text;
  std::vector<std::string> stop_sequences;
  PromptMode mode = PromptMode::zero_shot;
  PromptKind kind = PromptKind::task;
  /// SHA-256 over (kind, mode, text, stops).
  std::string fingerprint;

  bool operator==(const RenderedPrompt&) const = default;
};

/// Wording that is not fixed by the prompt grammar. Golden files bind to the
/// defaults below.
struct PromptConfig {
  std::string task_description =
      "Predict whether the relationship between the premise and the hypothesis is entailment, "
      "contradiction, or neutral.";
  /// Appended after a finished live discussion; must end with "Label:".
  std::string finalize_cue = "Considering the discussion above, give the final label.\nLabel:";
};

/// Validates the config (finalize cue ends with "Label:", description non-empty).
void check(const PromptConfig& config);

nlohmann::json to_json(const Exemplar& exemplar);
/// {"problem": {...corpus schema...}, "discussion": {...record schema...}?}
Exemplar exemplar_from_json(const nlohmann::json& j);
/// JSONL exemplar pack, one exemplar per line, order preserved.
std::vector<Exemplar> load_exemplars(const std::filesystem::path& path);
void write_exemplars(const std::filesystem::path& path, std::span<const Exemplar> exemplars);

nlohmann::json to_json(const RenderedPrompt& prompt);
RenderedPrompt prompt_from_json(const nlohmann::json& j);

RenderedPrompt make_prompt(std::string text, std::vector<std::string> stops, PromptMode mode,
                           PromptKind kind);

/// "Discussion: Human1: ... Human2: ..."
std::string render_discussion_block(const DiscussionRecord& discussion);

/// Task description, exemplars, then the target problem ending in "Label:".
/// Layout per exemplar (lines joined by "\n"):
///   Premise: <p>
///   Hypothesis: <h>
///   Discussion: Human1: ... Human2: ...   (few-shot-discussion only)
///   Label: <gold>
/// Throws ModeMismatch (zero-shot with exemplars) or MissingDiscussion.
RenderedPrompt render_task_prompt(PromptMode mode, std::span<const Exemplar> exemplars,
                                  const NLIProblem& problem, const PromptConfig& config = {});

/// "Premise: <p> Hypothesis: <h> Label: <a> or <b> Discussion: <prefix>",
/// stopping at the other human's marker. `prefix` comes from
/// context_prefix() and must end with next_speaker's marker.
RenderedPrompt render_continuation(const NLIProblem& problem, std::pair<Label, Label> label_pair,
                                   const std::string& prefix, Speaker next_speaker);

/// Same body, preceded by the task description and exemplars of `mode`.
RenderedPrompt render_continuation(PromptMode mode, std::span<const Exemplar> exemplars,
                                   const NLIProblem& problem, std::pair<Label, Label> label_pair,
                                   const std::string& prefix, Speaker next_speaker,
                                   const PromptConfig& config = {});

/// Task prompt with the system's prediction filled in after "Label:"; the
/// base every live-session prompt extends.
RenderedPrompt with_prediction(const RenderedPrompt& task_prompt, Label predicted);

/// base + "\n" + prior turns + "Human: <text> System:", stop ["Human:"].
RenderedPrompt render_session_turn(const RenderedPrompt& base, std::span<const Utterance> history,
                                   const std::string& human_text);

/// base + "\n" + turns + "\n" + finalize cue (ends with "Label:").
RenderedPrompt render_finalize(const RenderedPrompt& base, std::span<const Utterance> history,
                               const PromptConfig& config = {});

/// Zero-shot request for a two-person discussion that ends on `final_label`.
RenderedPrompt render_pseudo_gen(const NLIProblem& problem, Label human1_label, Label human2_label,
                                 Label final_label);

}  // namespace nlidisc
