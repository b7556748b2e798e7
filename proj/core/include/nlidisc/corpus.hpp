#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlidisc/labels.hpp"

namespace nlidisc {

struct NLIProblem {
  std::string id;
  std::string premise;
  std::string hypothesis;
  Label gold_label = Label::neutral;
  /// Five crowd labels when the corpus provides them (SNLI dev/test).
  std::optional<std::vector<Label>> annotator_labels;
  Source source = Source::custom;
  std::optional<Split> split;

  bool operator==(const NLIProblem&) const = default;
};

struct LabelDistribution {
  std::array<int, 3> counts{};

  int count(Label label) const noexcept { return counts[static_cast<std::size_t>(label)]; }
  int total() const noexcept { return counts[0] + counts[1] + counts[2]; }
  int max_count() const noexcept;
};

LabelDistribution tally(std::span<const Label> labels) noexcept;

/// Candidate JSON keys per field, tried in order. Defaults cover the SNLI
/// (sentence1/sentence2/gold_label/pairID) and ANLI (context/uid) layouts.
struct FieldMap {
  std::vector<std::string> id{"id", "uid", "pairID"};
  std::vector<std::string> premise{"premise", "sentence1", "context"};
  std::vector<std::string> hypothesis{"hypothesis", "sentence2"};
  std::vector<std::string> label{"label", "gold_label"};
  std::vector<std::string> annotator_labels{"annotator_labels"};
};

struct LoadResult {
  std::vector<NLIProblem> problems;
  /// Lines whose gold label is the no-consensus marker "-".
  std::size_t skipped_no_consensus = 0;
  /// Problems whose annotator list did not have exactly five entries; the
  /// list is dropped and the problem kept.
  std::size_t annotations_dropped = 0;
};

/// Reads JSONL, one problem per line. Blank lines are ignored. A per-line
/// "source" or "split" field overrides the argument, so files written by
/// write_corpus() load back unchanged.
///
/// Label alias table (case-insensitive): entailment|e, contradiction|c,
/// neutral|n, and "-" for no consensus.
LoadResult load_corpus(const std::filesystem::path& path, Source source, const FieldMap& fields = {});
LoadResult read_corpus(std::istream& in, Source source, const FieldMap& fields = {});

void write_corpus(std::ostream& out, std::span<const NLIProblem> problems);
void write_corpus(const std::filesystem::path& path, std::span<const NLIProblem> problems);

nlohmann::json to_json(const NLIProblem& problem);
/// Parses the canonical schema written by to_json(). Throws SchemaError.
NLIProblem problem_from_json(const nlohmann::json& j);

/// Strictly most frequent label, nullopt on a tie for the maximum.
/// Throws EmptyInput for an empty list.
std::optional<Label> majority_label(std::span<const Label> labels);

struct FilterResult {
  std::vector<NLIProblem> kept;
  std::size_t missing_annotations = 0;
};

/// Keeps problems whose five annotator labels peak at exactly three votes.
FilterResult filter_three_of_five(std::span<const NLIProblem> problems);

struct SplitCounts {
  std::size_t prompt = 0;
  std::size_t validation = 0;
  std::size_t evaluation = 0;

  std::size_t total() const noexcept { return prompt + validation + evaluation; }
};

/// Seeded shuffle, then the first `prompt` shuffled problems become prompt,
/// the next `validation` validation, and so on; the rest are unassigned.
/// Returned in input order. Throws InsufficientProblems.
std::vector<NLIProblem> assign_splits(std::vector<NLIProblem> problems, SplitCounts counts,
                                      std::uint64_t seed);

/// Seeded draw of n problems without replacement, in draw order.
std::vector<NLIProblem> sample_problems(std::span<const NLIProblem> problems, std::size_t n,
                                        std::uint64_t seed);

}  // namespace nlidisc
