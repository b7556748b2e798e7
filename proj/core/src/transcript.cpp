#include "nlidisc/transcript.hpp"

#include <fstream>

#include "nlidisc/error.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

namespace {

using nlohmann::json;

[[noreturn]] void violation(const std::string& name) { throw Error(Errc::invariant_violation, name); }
[[noreturn]] void schema(const std::string& field, const std::string& reason) {
  throw Error(Errc::schema_error, field + ": " + reason);
}

bool is_session_speaker(Speaker s) { return s == Speaker::human || s == Speaker::system; }

const json& member(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) schema(key, "missing");
  return *it;
}

std::string string_member(const json& obj, const char* key) {
  const json& v = member(obj, key);
  if (!v.is_string()) schema(key, "must be a string");
  return v.get<std::string>();
}

Label label_value(const json& v, const std::string& field) {
  if (!v.is_string()) schema(field, "must be a string");
  auto l = label_from_string(v.get<std::string>());
  if (!l) schema(field, "unknown label '" + v.get<std::string>() + "'");
  return *l;
}

void add_to(SplitStats& s, const DiscussionRecord& r) {
  ++s.records;
  s.utterances += r.utterances.size();
  for (const auto& u : r.utterances) {
    if (!u.tag) {
      ++s.tags.untagged;
      continue;
    }
    switch (*u.tag) {
      case ContributionTag::supportive: ++s.tags.supportive; break;
      case ContributionTag::unsupportive: ++s.tags.unsupportive; break;
      case ContributionTag::irrelevant: ++s.tags.irrelevant; break;
    }
  }
}

void finish(SplitStats& s) {
  if (s.records > 0) s.mean_utterances = static_cast<double>(s.utterances) / static_cast<double>(s.records);
}

json split_stats_json(const SplitStats& s) {
  return {{"records", s.records},
          {"utterances", s.utterances},
          {"mean_utterances", s.mean_utterances ? json(*s.mean_utterances) : json(nullptr)},
          {"supportive", s.tags.supportive},
          {"unsupportive", s.tags.unsupportive},
          {"irrelevant", s.tags.irrelevant},
          {"untagged", s.tags.untagged}};
}

}  // namespace

void validate(const DiscussionRecord& r) {
  if (r.problem_id.empty()) violation("problem_id must be non-empty");
  if (r.participant_labels.size() != 2) violation("exactly two participants required");
  const Label a = r.participant_labels.begin()->second;
  const Label b = std::next(r.participant_labels.begin())->second;
  if (a == b) violation("labels must disagree");
  if (r.final_label != a && r.final_label != b) violation("final label must be held by a participant");
  if (r.utterances.empty()) violation("utterances must be non-empty");

  const bool session = r.provenance == Provenance::session;
  for (const auto& [speaker, label] : r.participant_labels) {
    if (is_session_speaker(speaker) != session) violation("participant speakers do not match provenance");
  }
  for (std::size_t i = 0; i < r.utterances.size(); ++i) {
    const Utterance& u = r.utterances[i];
    if (u.index != i) violation("utterance index must equal its position");
    if (is_session_speaker(u.speaker) != session) violation("utterance speaker does not match provenance");
    if (trim(u.text).empty()) violation("utterance text must be non-empty");
    for (Speaker s : {Speaker::human1, Speaker::human2, Speaker::human, Speaker::system}) {
      if (u.text.rfind(speaker_marker(s), 0) == 0) violation("utterance text starts with a speaker marker");
    }
  }
}

DiscussionRecord record_from_json(const json& j) {
  if (!j.is_object()) schema("record", "must be an object");
  DiscussionRecord r;
  r.problem_id = string_member(j, "problem_id");

  const json& participants = member(j, "participants");
  if (!participants.is_object()) schema("participants", "must be an object");
  for (const auto& [key, value] : participants.items()) {
    auto speaker = speaker_from_string(key);
    if (!speaker) schema("participants", "unknown speaker '" + key + "'");
    r.participant_labels[*speaker] = label_value(value, "participants." + key);
  }
  r.final_label = label_value(member(j, "final_label"), "final_label");

  const std::string prov = string_member(j, "provenance");
  auto provenance = provenance_from_string(prov);
  if (!provenance) schema("provenance", "unknown value '" + prov + "'");
  r.provenance = *provenance;

  if (auto it = j.find("created_at"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) schema("created_at", "must be a string");
    r.created_at = it->get<std::string>();
  }

  const json& utterances = member(j, "utterances");
  if (!utterances.is_array()) schema("utterances", "must be an array");
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const json& u = utterances[i];
    const std::string field = "utterances[" + std::to_string(i) + "]";
    if (!u.is_object()) schema(field, "must be an object");
    Utterance out;
    out.index = i;
    if (auto idx = u.find("index"); idx != u.end()) {
      if (!idx->is_number_unsigned()) schema(field + ".index", "must be a non-negative integer");
      out.index = idx->get<std::size_t>();
    }
    const std::string speaker = string_member(u, "speaker");
    auto s = speaker_from_string(speaker);
    if (!s) schema(field + ".speaker", "unknown speaker '" + speaker + "'");
    out.speaker = *s;
    out.text = string_member(u, "text");
    if (auto tag = u.find("tag"); tag != u.end() && !tag->is_null()) {
      if (!tag->is_string()) schema(field + ".tag", "must be a string");
      auto t = tag_from_string(tag->get<std::string>());
      if (!t) schema(field + ".tag", "unknown tag '" + tag->get<std::string>() + "'");
      out.tag = *t;
    }
    r.utterances.push_back(std::move(out));
  }
  validate(r);
  return r;
}

DiscussionRecord parse_record(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema("record", e.what());
  }
  return record_from_json(j);
}

json to_json(const DiscussionRecord& r) {
  json participants = json::object();
  for (const auto& [speaker, label] : r.participant_labels) participants[std::string(to_string(speaker))] = to_string(label);
  json utterances = json::array();
  for (const auto& u : r.utterances) {
    json ju = {{"speaker", to_string(u.speaker)}, {"text", u.text}};
    if (u.tag) ju["tag"] = to_string(*u.tag);
    utterances.push_back(std::move(ju));
  }
  json j = {{"problem_id", r.problem_id},
            {"participants", std::move(participants)},
            {"final_label", to_string(r.final_label)},
            {"utterances", std::move(utterances)},
            {"provenance", to_string(r.provenance)}};
  if (!r.created_at.empty()) j["created_at"] = r.created_at;
  return j;
}

std::string serialize_record(const DiscussionRecord& record) { return to_json(record).dump(); }

std::vector<DiscussionRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, path.string());
  std::vector<DiscussionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const DiscussionRecord> records) {
  std::string out;
  for (const auto& r : records) out += serialize_record(r) + "\n";
  write_file(path.string(), out);
}

std::string render_turns(std::span<const Utterance> utterances) {
  std::string out;
  for (const auto& u : utterances) {
    if (!out.empty()) out += ' ';
    out += speaker_marker(u.speaker);
    out += ' ';
    out += u.text;
  }
  return out;
}

std::string context_prefix(const DiscussionRecord& record, std::size_t k) {
  if (k >= record.utterances.size())
    throw Error(Errc::index_out_of_range, "k=" + std::to_string(k) + " with " +
                                              std::to_string(record.utterances.size()) + " utterances");
  std::string out = render_turns(std::span(record.utterances).first(k));
  if (!out.empty()) out += ' ';
  out += speaker_marker(record.utterances[k].speaker);
  return out;
}

StatsReport corpus_stats(std::span<const DiscussionRecord> records,
                         const std::map<std::string, Split>& split_of) {
  StatsReport report;
  for (const auto& r : records) {
    auto it = split_of.find(r.problem_id);
    const Split split = it == split_of.end() ? Split::unassigned : it->second;
    add_to(report.per_split[split], r);
    add_to(report.overall, r);
  }
  for (auto& [split, s] : report.per_split) finish(s);
  finish(report.overall);
  return report;
}

json to_json(const StatsReport& report) {
  json splits = json::object();
  for (const auto& [split, s] : report.per_split) splits[std::string(to_string(split))] = split_stats_json(s);
  return {{"splits", std::move(splits)}, {"overall", split_stats_json(report.overall)}};
}

}  // namespace nlidisc
