#include "nlidisc/labels.hpp"

#include <algorithm>
#include <cctype>

#include "nlidisc/error.hpp"

namespace nlidisc {

namespace {

std::string lower_trimmed(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::entailment: return "entailment";
    case Label::contradiction: return "contradiction";
    case Label::neutral: return "neutral";
  }
  return "";
}

std::optional<Label> label_from_string(std::string_view text) noexcept {
  for (Label l : kAllLabels)
    if (to_string(l) == text) return l;
  return std::nullopt;
}

LabelToken parse_label_alias(std::string_view token) {
  // SNLI spells labels out, ANLI abbreviates them to one letter, and SNLI
  // marks annotator disagreement with "-".
  const std::string t = lower_trimmed(token);
  if (t == "entailment" || t == "e") return {Label::entailment, false};
  if (t == "contradiction" || t == "c") return {Label::contradiction, false};
  if (t == "neutral" || t == "n") return {Label::neutral, false};
  if (t == "-") return {std::nullopt, true};
  throw Error(Errc::unknown_label, "unrecognized label token '" + std::string(token) + "'");
}

std::string_view to_string(Speaker speaker) noexcept {
  switch (speaker) {
    case Speaker::human1: return "human1";
    case Speaker::human2: return "human2";
    case Speaker::human: return "human";
    case Speaker::system: return "system";
  }
  return "";
}

std::optional<Speaker> speaker_from_string(std::string_view text) noexcept {
  for (Speaker s : {Speaker::human1, Speaker::human2, Speaker::human, Speaker::system})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::string_view speaker_marker(Speaker speaker) noexcept {
  switch (speaker) {
    case Speaker::human1: return "Human1:";
    case Speaker::human2: return "Human2:";
    case Speaker::human: return "Human:";
    case Speaker::system: return "System:";
  }
  return "";
}

std::string_view to_string(ContributionTag tag) noexcept {
  switch (tag) {
    case ContributionTag::supportive: return "supportive";
    case ContributionTag::unsupportive: return "unsupportive";
    case ContributionTag::irrelevant: return "irrelevant";
  }
  return "";
}

std::optional<ContributionTag> tag_from_string(std::string_view text) noexcept {
  for (auto t : {ContributionTag::supportive, ContributionTag::unsupportive, ContributionTag::irrelevant})
    if (to_string(t) == text) return t;
  return std::nullopt;
}

std::string_view to_string(PromptMode mode) noexcept {
  switch (mode) {
    case PromptMode::zero_shot: return "zero-shot";
    case PromptMode::few_shot: return "few-shot";
    case PromptMode::few_shot_discussion: return "few-shot-discussion";
  }
  return "";
}

std::optional<PromptMode> mode_from_string(std::string_view text) noexcept {
  for (auto m : {PromptMode::zero_shot, PromptMode::few_shot, PromptMode::few_shot_discussion})
    if (to_string(m) == text) return m;
  return std::nullopt;
}

std::string_view table_row_name(PromptMode mode) noexcept {
  switch (mode) {
    case PromptMode::zero_shot: return "zero-shot";
    case PromptMode::few_shot: return "few-shot";
    case PromptMode::few_shot_discussion: return "few-shot-dis.";
  }
  return "";
}

std::string_view to_string(Source source) noexcept {
  switch (source) {
    case Source::snli_dev: return "snli-dev";
    case Source::snli_test: return "snli-test";
    case Source::anli_r1: return "anli-r1";
    case Source::anli_r2: return "anli-r2";
    case Source::anli_r3: return "anli-r3";
    case Source::custom: return "custom";
  }
  return "";
}

std::optional<Source> source_from_string(std::string_view text) noexcept {
  for (auto s : {Source::snli_dev, Source::snli_test, Source::anli_r1, Source::anli_r2,
                 Source::anli_r3, Source::custom})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::string_view source_column(Source source) noexcept {
  switch (source) {
    case Source::snli_dev:
    case Source::snli_test: return "SNLI";
    case Source::anli_r1: return "R1";
    case Source::anli_r2: return "R2";
    case Source::anli_r3: return "R3";
    case Source::custom: return "custom";
  }
  return "";
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::prompt: return "prompt";
    case Split::validation: return "validation";
    case Split::evaluation: return "evaluation";
    case Split::unassigned: return "unassigned";
  }
  return "";
}

std::optional<Split> split_from_string(std::string_view text) noexcept {
  for (auto s : {Split::prompt, Split::validation, Split::evaluation, Split::unassigned})
    if (to_string(s) == text) return s;
  return std::nullopt;
}

std::string_view to_string(Provenance provenance) noexcept {
  switch (provenance) {
    case Provenance::human: return "human";
    case Provenance::pseudo: return "pseudo";
    case Provenance::session: return "session";
  }
  return "";
}

std::optional<Provenance> provenance_from_string(std::string_view text) noexcept {
  for (auto p : {Provenance::human, Provenance::pseudo, Provenance::session})
    if (to_string(p) == text) return p;
  return std::nullopt;
}

}  // namespace nlidisc
