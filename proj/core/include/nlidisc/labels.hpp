#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace nlidisc {

enum class Label { entailment, contradiction, neutral };

inline constexpr std::array<Label, 3> kAllLabels = {Label::entailment, Label::contradiction,
                                                    Label::neutral};

std::string_view to_string(Label label) noexcept;
/// Exact canonical (lowercase) names only.
std::optional<Label> label_from_string(std::string_view text) noexcept;

/// Outcome of reading a label token from corpus files. Corpora use
/// several spellings; see corpus.hpp for the alias table.
struct LabelToken {
  std::optional<Label> label;
  bool no_consensus = false;
};
/// Throws Error(unknown_label) for tokens outside the alias table.
LabelToken parse_label_alias(std::string_view token);

enum class Speaker { human1, human2, human, system };

std::string_view to_string(Speaker speaker) noexcept;
std::optional<Speaker> speaker_from_string(std::string_view text) noexcept;
/// "Human1:", "Human2:", "Human:", "System:".
std::string_view speaker_marker(Speaker speaker) noexcept;

enum class ContributionTag { supportive, unsupportive, irrelevant };

std::string_view to_string(ContributionTag tag) noexcept;
std::optional<ContributionTag> tag_from_string(std::string_view text) noexcept;

enum class PromptMode { zero_shot, few_shot, few_shot_discussion };

std::string_view to_string(PromptMode mode) noexcept;
std::optional<PromptMode> mode_from_string(std::string_view text) noexcept;
/// Row label used in report tables ("zero-shot", "few-shot", "few-shot-dis.").
std::string_view table_row_name(PromptMode mode) noexcept;

enum class Source { snli_dev, snli_test, anli_r1, anli_r2, anli_r3, custom };

std::string_view to_string(Source source) noexcept;
std::optional<Source> source_from_string(std::string_view text) noexcept;
/// Report column a source aggregates into: SNLI, R1, R2, R3 or custom.
std::string_view source_column(Source source) noexcept;

enum class Split { prompt, validation, evaluation, unassigned };

std::string_view to_string(Split split) noexcept;
std::optional<Split> split_from_string(std::string_view text) noexcept;

enum class Provenance { human, pseudo, session };

std::string_view to_string(Provenance provenance) noexcept;
std::optional<Provenance> provenance_from_string(std::string_view text) noexcept;

}  // namespace nlidisc
