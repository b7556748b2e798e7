#include "nlidisc/prompting.hpp"

#include <sstream>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

namespace {

constexpr char kSection = '\n';

std::string problem_lines(const NLIProblem& p) {
  return "Premise: " + p.premise + kSection + "Hypothesis: " + p.hypothesis;
}

std::string exemplar_block(const Exemplar& ex, PromptMode mode) {
  std::string out = problem_lines(ex.problem);
  if (mode == PromptMode::few_shot_discussion) {
    out += kSection;
    out += render_discussion_block(*ex.discussion);
  }
  out += kSection;
  out += "Label: ";
  out += to_string(ex.problem.gold_label);
  return out;
}

std::string header(PromptMode mode, std::span<const Exemplar> exemplars, const PromptConfig& config) {
  if (mode == PromptMode::zero_shot && !exemplars.empty())
    throw Error(Errc::mode_mismatch, "zero-shot prompts take no exemplars");
  if (mode == PromptMode::few_shot_discussion) {
    for (const auto& ex : exemplars) {
      if (!ex.discussion) throw Error(Errc::missing_discussion, ex.problem.id);
    }
  }
  std::string out = config.task_description;
  for (const auto& ex : exemplars) {
    out += kSection;
    out += exemplar_block(ex, mode);
  }
  return out;
}

std::string continuation_body(const NLIProblem& problem, std::pair<Label, Label> labels,
                              const std::string& prefix, Speaker next_speaker) {
  if (labels.first == labels.second)
    throw Error(Errc::equal_labels, "continuation needs two opposing labels");
  if (next_speaker != Speaker::human1 && next_speaker != Speaker::human2)
    throw Error(Errc::invalid_argument, "continuations are generated for Human1 or Human2");
  if (!ends_with(prefix, speaker_marker(next_speaker)))
    throw Error(Errc::invalid_argument, "prefix must end with the next speaker's marker");
  std::string out = "Premise: " + problem.premise + " Hypothesis: " + problem.hypothesis + " Label: ";
  out += to_string(labels.first);
  out += " or ";
  out += to_string(labels.second);
  out += " Discussion: ";
  out += prefix;
  return out;
}

std::vector<std::string> continuation_stops(Speaker next_speaker) {
  std::vector<std::string> stops;
  for (Speaker s : {Speaker::human1, Speaker::human2}) {
    if (s != next_speaker) stops.emplace_back(speaker_marker(s));
  }
  return stops;
}

std::string_view phrase(Label label) {
  switch (label) {
    case Label::entailment: return "an entailment";
    case Label::contradiction: return "a contradiction";
    case Label::neutral: return "neutral";
  }
  return "";
}

}  // namespace

std::string_view to_string(PromptKind kind) noexcept {
  switch (kind) {
    case PromptKind::task: return "task";
    case PromptKind::continuation: return "continuation";
    case PromptKind::session_turn: return "session-turn";
    case PromptKind::finalize: return "finalize";
    case PromptKind::pseudo_gen: return "pseudo-gen";
  }
  return "";
}

void check(const PromptConfig& config) {
  if (trim(config.task_description).empty())
    throw Error(Errc::config_error, "task_description must be non-empty");
  if (!ends_with(config.finalize_cue, "Label:"))
    throw Error(Errc::config_error, "finalize_cue must end with \"Label:\"");
}

nlohmann::json to_json(const Exemplar& exemplar) {
  nlohmann::json j = {{"problem", to_json(exemplar.problem)}};
  if (exemplar.discussion) j["discussion"] = to_json(*exemplar.discussion);
  return j;
}

Exemplar exemplar_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("problem")) throw Error(Errc::schema_error, "exemplar needs a \"problem\" object");
  Exemplar ex;
  ex.problem = problem_from_json(j.at("problem"));
  if (auto it = j.find("discussion"); it != j.end() && !it->is_null()) ex.discussion = record_from_json(*it);
  return ex;
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& path) {
  std::vector<Exemplar> out;
  std::istringstream in(read_file(path.string()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(exemplar_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::malformed_line, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_exemplars(const std::filesystem::path& path, std::span<const Exemplar> exemplars) {
  std::string out;
  for (const auto& ex : exemplars) out += to_json(ex).dump() + "\n";
  write_file(path.string(), out);
}

nlohmann::json to_json(const RenderedPrompt& prompt) {
  return {{"text", prompt.text},
          {"stop_sequences", prompt.stop_sequences},
          {"mode", to_string(prompt.mode)},
          {"kind", to_string(prompt.kind)},
          {"fingerprint", prompt.fingerprint}};
}

RenderedPrompt prompt_from_json(const nlohmann::json& j) {
  try {
    auto mode = mode_from_string(j.at("mode").get<std::string>());
    std::optional<PromptKind> kind;
    const auto kind_name = j.at("kind").get<std::string>();
    for (auto k : {PromptKind::task, PromptKind::continuation, PromptKind::session_turn, PromptKind::finalize,
                   PromptKind::pseudo_gen})
      if (to_string(k) == kind_name) kind = k;
    if (!mode || !kind) throw Error(Errc::schema_error, "unknown prompt mode or kind");
    RenderedPrompt p = make_prompt(j.at("text").get<std::string>(),
                                   j.at("stop_sequences").get<std::vector<std::string>>(), *mode, *kind);
    if (j.contains("fingerprint") && j.at("fingerprint").get<std::string>() != p.fingerprint)
      throw Error(Errc::schema_error, "prompt fingerprint does not match its content");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::schema_error, std::string("prompt: ") + e.what());
  }
}

RenderedPrompt make_prompt(std::string text, std::vector<std::string> stops, PromptMode mode,
                           PromptKind kind) {
  Sha256 h;
  h.update_field("nlidisc-prompt-v1").update_field(to_string(kind)).update_field(to_string(mode)).update_field(text);
  for (const auto& s : stops) h.update_field(s);
  RenderedPrompt p;
  p.fingerprint = h.hex_digest();
  p.text = std::move(text);
  p.stop_sequences = std::move(stops);
  p.mode = mode;
  p.kind = kind;
  return p;
}

std::string render_discussion_block(const DiscussionRecord& discussion) {
  return "Discussion: " + render_turns(discussion.utterances);
}

RenderedPrompt render_task_prompt(PromptMode mode, std::span<const Exemplar> exemplars,
                                  const NLIProblem& problem, const PromptConfig& config) {
  std::string text = header(mode, exemplars, config);
  text += kSection;
  text += problem_lines(problem);
  text += kSection;
  text += "Label:";
  return make_prompt(std::move(text), {"\n"}, mode, PromptKind::task);
}

RenderedPrompt render_continuation(const NLIProblem& problem, std::pair<Label, Label> label_pair,
                                   const std::string& prefix, Speaker next_speaker) {
  return make_prompt(continuation_body(problem, label_pair, prefix, next_speaker),
                     continuation_stops(next_speaker), PromptMode::zero_shot, PromptKind::continuation);
}

RenderedPrompt render_continuation(PromptMode mode, std::span<const Exemplar> exemplars,
                                   const NLIProblem& problem, std::pair<Label, Label> label_pair,
                                   const std::string& prefix, Speaker next_speaker,
                                   const PromptConfig& config) {
  std::string text = header(mode, exemplars, config);
  text += kSection;
  text += continuation_body(problem, label_pair, prefix, next_speaker);
  return make_prompt(std::move(text), continuation_stops(next_speaker), mode, PromptKind::continuation);
}

RenderedPrompt with_prediction(const RenderedPrompt& task_prompt, Label predicted) {
  if (task_prompt.kind != PromptKind::task || !ends_with(task_prompt.text, "Label:"))
    throw Error(Errc::invalid_argument, "with_prediction expects a task prompt ending in \"Label:\"");
  std::string text = task_prompt.text + " ";
  text += to_string(predicted);
  return make_prompt(std::move(text), task_prompt.stop_sequences, task_prompt.mode, PromptKind::task);
}

RenderedPrompt render_session_turn(const RenderedPrompt& base, std::span<const Utterance> history,
                                   const std::string& human_text) {
  const std::string turn = trim(human_text);
  if (turn.empty()) throw Error(Errc::empty_utterance, "human turn text is empty");
  std::string text = base.text;
  text += kSection;
  if (!history.empty()) {
    text += render_turns(history);
    text += ' ';
  }
  text += "Human: " + turn + " System:";
  return make_prompt(std::move(text), {"Human:"}, base.mode, PromptKind::session_turn);
}

RenderedPrompt render_finalize(const RenderedPrompt& base, std::span<const Utterance> history,
                               const PromptConfig& config) {
  if (history.empty()) throw Error(Errc::empty_history, "nothing to finalize");
  std::string text = base.text;
  text += kSection;
  text += render_turns(history);
  text += kSection;
  text += config.finalize_cue;
  return make_prompt(std::move(text), {"\n"}, base.mode, PromptKind::finalize);
}

RenderedPrompt render_pseudo_gen(const NLIProblem& problem, Label human1_label, Label human2_label,
                                 Label final_label) {
  if (human1_label == human2_label) throw Error(Errc::equal_labels, "humans must start from different labels");
  if (final_label != human1_label && final_label != human2_label)
    throw Error(Errc::final_not_held, "final label must be one of the humans' labels");
  std::string text =
      "Reproduce a multi-turn interactive discussion in which the following premise and hypothesis "
      "are entailment, contradiction, or neutral, with the humans agreeing with each other on the "
      "final label. Human1's label is ";
  text += phrase(human1_label);
  text += ", and Human2's label is ";
  text += phrase(human2_label);
  text += ". In the end, they agree on the label of ";
  text += to_string(final_label);
  text += ". Premise: " + problem.premise + " Hypothesis: " + problem.hypothesis;
  return make_prompt(std::move(text), {}, PromptMode::zero_shot, PromptKind::pseudo_gen);
}

}  // namespace nlidisc
