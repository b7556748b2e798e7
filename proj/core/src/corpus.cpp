#include "nlidisc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "nlidisc/error.hpp"
#include "nlidisc/rng.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

namespace {

using nlohmann::json;

const json* find_field(const json& obj, const std::vector<std::string>& keys) {
  for (const auto& key : keys) {
    auto it = obj.find(key);
    if (it != obj.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& why) {
  throw Error(Errc::malformed_line, "line " + std::to_string(line_no) + ": " + why);
}

std::string required_text(const json& obj, const std::vector<std::string>& keys,
                          std::size_t line_no, const char* what) {
  const json* v = find_field(obj, keys);
  if (v == nullptr || !v->is_string()) malformed(line_no, std::string("missing string field '") + what + "'");
  std::string text = trim(v->get<std::string>());
  if (text.empty()) malformed(line_no, std::string("empty ") + what);
  return text;
}

}  // namespace

int LabelDistribution::max_count() const noexcept {
  return *std::max_element(counts.begin(), counts.end());
}

LabelDistribution tally(std::span<const Label> labels) noexcept {
  LabelDistribution d;
  for (Label l : labels) ++d.counts[static_cast<std::size_t>(l)];
  return d;
}

LoadResult read_corpus(std::istream& in, Source source, const FieldMap& fields) {
  LoadResult result;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      malformed(line_no, e.what());
    }
    if (!obj.is_object()) malformed(line_no, "expected a JSON object");

    const json* label_field = find_field(obj, fields.label);
    if (label_field == nullptr || !label_field->is_string()) malformed(line_no, "missing label");
    const LabelToken token = parse_label_alias(label_field->get<std::string>());
    if (token.no_consensus) {
      ++result.skipped_no_consensus;
      continue;
    }

    NLIProblem p;
    p.premise = required_text(obj, fields.premise, line_no, "premise");
    p.hypothesis = required_text(obj, fields.hypothesis, line_no, "hypothesis");
    p.gold_label = *token.label;
    p.source = source;

    if (const json* s = find_field(obj, {"source"}); s != nullptr && s->is_string()) {
      auto parsed = source_from_string(s->get<std::string>());
      if (!parsed) malformed(line_no, "unknown source '" + s->get<std::string>() + "'");
      p.source = *parsed;
    }
    if (const json* s = find_field(obj, {"split"}); s != nullptr && s->is_string()) {
      auto parsed = split_from_string(s->get<std::string>());
      if (!parsed) malformed(line_no, "unknown split '" + s->get<std::string>() + "'");
      p.split = *parsed;
    }

    if (const json* id = find_field(obj, fields.id); id != nullptr) {
      p.id = id->is_string() ? id->get<std::string>() : id->dump();
    }
    if (p.id.empty()) p.id = std::string(to_string(p.source)) + "-" + std::to_string(line_no);
    if (!seen.insert(p.id).second) throw Error(Errc::duplicate_id, "line " + std::to_string(line_no) + ": id '" + p.id + "'");

    if (const json* ann = find_field(obj, fields.annotator_labels); ann != nullptr) {
      if (!ann->is_array()) malformed(line_no, "annotator_labels must be an array");
      std::vector<Label> labels;
      for (const auto& a : *ann) {
        if (!a.is_string()) malformed(line_no, "annotator label must be a string");
        const LabelToken t = parse_label_alias(a.get<std::string>());
        if (!t.label) malformed(line_no, "annotator label cannot be '-'");
        labels.push_back(*t.label);
      }
      if (labels.size() == 5) {
        p.annotator_labels = std::move(labels);
      } else {
        ++result.annotations_dropped;
      }
    }
    result.problems.push_back(std::move(p));
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path, Source source, const FieldMap& fields) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, path.string());
  return read_corpus(in, source, fields);
}

json to_json(const NLIProblem& p) {
  json j = {{"id", p.id},
            {"premise", p.premise},
            {"hypothesis", p.hypothesis},
            {"label", to_string(p.gold_label)},
            {"source", to_string(p.source)}};
  if (p.annotator_labels) {
    json arr = json::array();
    for (Label l : *p.annotator_labels) arr.push_back(to_string(l));
    j["annotator_labels"] = std::move(arr);
  }
  if (p.split) j["split"] = to_string(*p.split);
  return j;
}

NLIProblem problem_from_json(const json& j) {
  std::istringstream line(j.dump());
  LoadResult r;
  try {
    r = read_corpus(line, Source::custom);
  } catch (const Error& e) {
    throw Error(Errc::schema_error, e.what());
  }
  if (r.problems.size() != 1) throw Error(Errc::schema_error, "problem has no usable gold label");
  return std::move(r.problems.front());
}

void write_corpus(std::ostream& out, std::span<const NLIProblem> problems) {
  for (const auto& p : problems) out << to_json(p).dump() << '\n';
}

void write_corpus(const std::filesystem::path& path, std::span<const NLIProblem> problems) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  write_corpus(out, problems);
}

std::optional<Label> majority_label(std::span<const Label> labels) {
  if (labels.empty()) throw Error(Errc::empty_input, "majority_label of an empty list");
  const LabelDistribution d = tally(labels);
  const int best = d.max_count();
  std::optional<Label> winner;
  for (Label l : kAllLabels) {
    if (d.count(l) != best) continue;
    if (winner) return std::nullopt;
    winner = l;
  }
  return winner;
}

FilterResult filter_three_of_five(std::span<const NLIProblem> problems) {
  FilterResult r;
  for (const auto& p : problems) {
    if (!p.annotator_labels || p.annotator_labels->size() != 5) {
      ++r.missing_annotations;
      continue;
    }
    if (tally(*p.annotator_labels).max_count() == 3) r.kept.push_back(p);
  }
  return r;
}

std::vector<NLIProblem> assign_splits(std::vector<NLIProblem> problems, SplitCounts counts,
                                      std::uint64_t seed) {
  if (counts.total() > problems.size())
    throw Error(Errc::insufficient_problems, "needed " + std::to_string(counts.total()) +
                                                 ", available " + std::to_string(problems.size()));
  std::vector<std::size_t> order(problems.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    Split s = Split::unassigned;
    if (rank < counts.prompt) {
      s = Split::prompt;
    } else if (rank < counts.prompt + counts.validation) {
      s = Split::validation;
    } else if (rank < counts.total()) {
      s = Split::evaluation;
    }
    problems[order[rank]].split = s;
  }
  return problems;
}

std::vector<NLIProblem> sample_problems(std::span<const NLIProblem> problems, std::size_t n,
                                        std::uint64_t seed) {
  if (n > problems.size())
    throw Error(Errc::insufficient_problems,
                "needed " + std::to_string(n) + ", available " + std::to_string(problems.size()));
  std::vector<std::size_t> order(problems.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<NLIProblem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(problems[order[i]]);
  return out;
}

}  // namespace nlidisc
