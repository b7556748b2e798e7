#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlidisc/corpus.hpp"
#include "nlidisc/gateway.hpp"
#include "nlidisc/transcript.hpp"

namespace nlidisc {

/// Labels handed to the two simulated humans. One of them holds gold, the
/// other a wrong label; they end up agreeing on gold.
struct RoleAssignment {
  Label human1 = Label::neutral;
  Label human2 = Label::neutral;
  Label final_label = Label::neutral;

  bool operator==(const RoleAssignment&) const = default;
};

/// A fair coin picks the gold holder; the other label is uniform over the
/// two wrong ones.
RoleAssignment assign_roles(Label gold, std::uint64_t seed) noexcept;

/// Splits generated text on "Human1:"/"Human2:" markers. Text before the
/// first marker and empty turns are dropped, each with a warning.
/// Throws NoMarkers or FewerThanTwoUtterances.
DiscussionRecord parse_discussion(std::string_view text, const RoleAssignment& roles, const std::string& problem_id,
                                  std::vector<std::string>* warnings = nullptr);

struct PseudoReject {
  std::string problem_id;
  std::string reason;
};

struct PseudoStats {
  std::size_t requested = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  /// Over accepted records; nullopt when none.
  std::optional<double> mean_utterances;
  double reject_rate = 0.0;
};

PseudoStats pseudo_stats(std::span<const DiscussionRecord> records, std::size_t requested);

struct PseudoBatch {
  std::vector<DiscussionRecord> records;
  std::vector<PseudoReject> rejects;
  PseudoStats stats;
  std::vector<std::string> warnings;
};

struct PseudoOptions {
  std::uint64_t seed = 0;
  /// Stamped on every record; leave empty for reproducible output.
  std::string created_at;
  std::size_t jobs = 1;
  std::string run_id = "pseudogen";
};

/// One completion per problem (sample index 0, then 1 on the single retry).
/// Every problem lands in exactly one of records/rejects, in input order.
PseudoBatch generate_batch(std::span<const NLIProblem> problems, const SamplingParams& params, Gateway& gateway,
                           const PseudoOptions& options);

/// One line of the fine-tuning export.
struct FinetuneRow {
  std::string premise;
  std::string hypothesis;
  /// "Discussion: Human1: ... Human2: ...", the exemplar rendering.
  std::string discussion;
  Label label = Label::neutral;

  bool operator==(const FinetuneRow&) const = default;
};

struct ExportSummary {
  std::size_t rows = 0;
  std::filesystem::path data;
  std::filesystem::path metadata;
};

/// Writes `path` as JSONL {premise, hypothesis, discussion, label} and a
/// sibling "<stem>.meta.json" describing the format and the reference
/// fine-tuning hyperparameters. Throws InvalidArgument for records whose
/// problem is unknown, IoError on write failure.
ExportSummary export_finetune(std::span<const DiscussionRecord> records, const std::map<std::string, NLIProblem>& problems,
                              const std::filesystem::path& path);
std::vector<FinetuneRow> read_finetune(const std::filesystem::path& path);

}  // namespace nlidisc
