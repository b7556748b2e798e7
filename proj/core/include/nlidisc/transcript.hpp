#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlidisc/labels.hpp"

namespace nlidisc {

struct Utterance {
  std::size_t index = 0;
  Speaker speaker = Speaker::human1;
  std::string text;
  std::optional<ContributionTag> tag;

  bool operator==(const Utterance&) const = default;
};

/// A discussion between two participants who initially disagreed.
///
/// Invariants (checked by validate()):
///  - exactly two participants with distinct initial labels;
///  - final_label is one of the participants' labels;
///  - at least one utterance, each with non-empty text that does not open
///    with a speaker marker, and index equal to its position;
///  - session records use Human/System speakers, all others Human1/Human2.
///
/// Speaker alternation is not required.
struct DiscussionRecord {
  std::string problem_id;
  std::map<Speaker, Label> participant_labels;
  Label final_label = Label::neutral;
  std::vector<Utterance> utterances;
  Provenance provenance = Provenance::human;
  /// UTC ISO-8601; empty when unknown.
  std::string created_at;

  bool operator==(const DiscussionRecord&) const = default;
};

/// Throws Error(invariant_violation) naming the first violated invariant.
void validate(const DiscussionRecord& record);

/// JSON schema:
///   {"problem_id": str, "participants": {speaker: label, speaker: label},
///    "final_label": label, "provenance": "human"|"pseudo"|"session",
///    "created_at": str?, "utterances": [{"speaker": str, "text": str, "tag": str?}]}
/// Throws SchemaError for shape problems, InvariantViolation for the rest.
DiscussionRecord record_from_json(const nlohmann::json& j);
DiscussionRecord parse_record(std::string_view json_text);
nlohmann::json to_json(const DiscussionRecord& record);
/// Single-line JSON, keys in a fixed order.
std::string serialize_record(const DiscussionRecord& record);

std::vector<DiscussionRecord> load_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, std::span<const DiscussionRecord> records);

/// "Human1: <text> Human2: <text> ..." joined by single spaces.
std::string render_turns(std::span<const Utterance> utterances);

/// Utterances [0, k) followed by utterance k's speaker marker, e.g.
/// "Human1: I think ... Human2:". Throws IndexOutOfRange.
std::string context_prefix(const DiscussionRecord& record, std::size_t k);

struct TagCounts {
  std::size_t supportive = 0;
  std::size_t unsupportive = 0;
  std::size_t irrelevant = 0;
  std::size_t untagged = 0;

  std::size_t tagged() const noexcept { return supportive + unsupportive + irrelevant; }
};

struct SplitStats {
  std::size_t records = 0;
  std::size_t utterances = 0;
  std::optional<double> mean_utterances;
  TagCounts tags;
};

struct StatsReport {
  std::map<Split, SplitStats> per_split;
  SplitStats overall;
};

/// Per-split utterance means and tag counts. Records whose problem id is
/// not in `split_of` count as unassigned.
StatsReport corpus_stats(std::span<const DiscussionRecord> records,
                         const std::map<std::string, Split>& split_of = {});
nlohmann::json to_json(const StatsReport& report);

}  // namespace nlidisc
