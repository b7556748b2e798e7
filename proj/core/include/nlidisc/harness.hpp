#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlidisc/corpus.hpp"
#include "nlidisc/embeddings.hpp"
#include "nlidisc/gateway.hpp"
#include "nlidisc/noise.hpp"
#include "nlidisc/prompting.hpp"
#include "nlidisc/report.hpp"
#include "nlidisc/session.hpp"
#include "nlidisc/transcript.hpp"

namespace nlidisc {

using ProblemIndex = std::map<std::string, NLIProblem>;
/// Throws DuplicateId.
ProblemIndex index_problems(std::span<const NLIProblem> problems);

struct EvalContext {
  Gateway& gateway;
  /// n_samples applies to generation; NLI predictions and scenario turns
  /// always draw a single sample.
  SamplingParams params;
  PromptConfig prompts;
  /// Worker threads for per-item fan-out. Results never depend on it.
  std::size_t jobs = 1;
  std::string run_id = "eval";
  std::uint64_t seed = 0;
};

/// Exemplars a mode actually uses: none for zero-shot.
std::span<const Exemplar> exemplars_for(PromptMode mode, std::span<const Exemplar> exemplars) noexcept;

/// Run metadata shared by every report: seed, backend, sampling parameters,
/// prompt-config and exemplar fingerprints.
nlohmann::json run_metadata(const EvalContext& ctx, std::span<const Exemplar> exemplars);

/// Continuation-generation similarity (one row per mode; columns
/// supportive, unsupportive, diff.). Every utterance of every record must be
/// tagged; irrelevant ones are skipped. Item failures are logged in
/// details.failures and left out of the aggregate.
/// Throws UntaggedUtterance before any request is made.
EvalReport eval_generation(std::span<const DiscussionRecord> records, const ProblemIndex& problems,
                           std::span<const PromptMode> modes, std::span<const Exemplar> exemplars,
                           EmbeddingProvider& provider, EvalContext& ctx);

struct NliPrediction {
  std::string problem_id;
  Source source = Source::custom;
  Label gold_label = Label::neutral;
  /// nullopt is an abstention (unparseable reply or failed request).
  std::optional<Label> predicted;
  std::string prompt_fingerprint;
  std::string error;

  bool correct() const noexcept { return predicted && *predicted == gold_label; }
};

std::vector<NliPrediction> predict_nli(std::span<const NLIProblem> problems, PromptMode mode,
                                       std::span<const Exemplar> exemplars, EvalContext& ctx);

/// Accuracy per source corpus, one row per mode. Columns are SNLI, R1, R2,
/// R3 (plus "custom" when such problems are present); abstentions count as
/// incorrect. Modes are compared pairwise with McNemar's test per column.
EvalReport eval_nli(std::span<const NLIProblem> problems, std::span<const PromptMode> modes,
                    std::span<const Exemplar> exemplars, EvalContext& ctx);

struct ScenarioRun {
  /// Acceptance rate / Objection rate per mode.
  EvalReport rates;
  /// Before / After accuracy per mode.
  EvalReport before_after;
  std::map<PromptMode, std::vector<ScenarioOutcome>> outcomes;
};

/// Seeded half/half acceptance/objection assignment, adjusted per problem
/// when the initial prediction forces the other kind (adjustments are
/// logged in details). `agent` is shared across workers and must tolerate
/// concurrent calls when ctx.jobs > 1.
ScenarioRun eval_scenarios(std::span<const NLIProblem> problems, std::span<const PromptMode> modes,
                           std::span<const Exemplar> exemplars, ScriptedAgent& agent, EvalContext& ctx,
                           int turn_budget = 8);

/// Accuracy deltas (noisy - clean) of few-shot-discussion prompting, one row
/// per noise spec. Negative values mean the noise hurt. The clean baseline
/// is run in-call unless supplied.
EvalReport eval_ablation(std::span<const NLIProblem> problems, std::span<const Exemplar> exemplars,
                         std::span<const NoiseSpec> specs, std::span<const DiscussionRecord> pool,
                         EvalContext& ctx, const std::vector<NliPrediction>* clean_baseline = nullptr);

}  // namespace nlidisc
