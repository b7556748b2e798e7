#include "nlidisc/pseudogen.hpp"

#include <fstream>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/parallel.hpp"
#include "nlidisc/prompting.hpp"
#include "nlidisc/rng.hpp"
#include "nlidisc/text.hpp"

namespace nlidisc {

using nlohmann::json;

RoleAssignment assign_roles(Label gold, std::uint64_t seed) noexcept {
  Rng rng(seed);
  const bool human1_holds_gold = rng.coin();
  Label wrong[2];
  int n = 0;
  for (Label l : kAllLabels)
    if (l != gold) wrong[n++] = l;
  const Label other = wrong[rng.below(2)];
  RoleAssignment r;
  r.human1 = human1_holds_gold ? gold : other;
  r.human2 = human1_holds_gold ? other : gold;
  r.final_label = gold;
  return r;
}

DiscussionRecord parse_discussion(std::string_view text, const RoleAssignment& roles, const std::string& problem_id,
                                  std::vector<std::string>* warnings) {
  auto warn = [&](std::string w) {
    if (warnings != nullptr) warnings->push_back(problem_id + ": " + std::move(w));
  };
  const std::string_view m1 = speaker_marker(Speaker::human1);
  const std::string_view m2 = speaker_marker(Speaker::human2);

  struct Mark {
    std::size_t pos;
    Speaker speaker;
  };
  std::vector<Mark> marks;
  for (std::size_t pos = 0; pos < text.size();) {
    const auto a = text.find(m1, pos);
    const auto b = text.find(m2, pos);
    if (a == std::string_view::npos && b == std::string_view::npos) break;
    if (a < b) {
      marks.push_back({a, Speaker::human1});
      pos = a + m1.size();
    } else {
      marks.push_back({b, Speaker::human2});
      pos = b + m2.size();
    }
  }
  if (marks.empty()) throw Error(Errc::no_markers, "no Human1:/Human2: markers in generated text");
  if (!trim(text.substr(0, marks.front().pos)).empty()) warn("discarded text before the first marker");

  DiscussionRecord rec;
  rec.problem_id = problem_id;
  rec.participant_labels = {{Speaker::human1, roles.human1}, {Speaker::human2, roles.human2}};
  rec.final_label = roles.final_label;
  rec.provenance = Provenance::pseudo;
  for (std::size_t i = 0; i < marks.size(); ++i) {
    const std::size_t begin = marks[i].pos + speaker_marker(marks[i].speaker).size();
    const std::size_t end = i + 1 < marks.size() ? marks[i + 1].pos : text.size();
    std::string body = trim(text.substr(begin, end - begin));
    if (body.empty()) {
      warn("dropped empty turn " + std::to_string(i));
      continue;
    }
    rec.utterances.push_back({rec.utterances.size(), marks[i].speaker, std::move(body), std::nullopt});
  }
  if (rec.utterances.size() < 2)
    throw Error(Errc::fewer_than_two_utterances,
                "generated discussion has " + std::to_string(rec.utterances.size()) + " utterance(s)");
  return rec;
}

PseudoStats pseudo_stats(std::span<const DiscussionRecord> records, std::size_t requested) {
  PseudoStats s;
  s.requested = requested;
  s.accepted = records.size();
  s.rejected = requested >= records.size() ? requested - records.size() : 0;
  if (!records.empty()) {
    std::size_t total = 0;
    for (const auto& r : records) total += r.utterances.size();
    s.mean_utterances = static_cast<double>(total) / static_cast<double>(records.size());
  }
  s.reject_rate = requested == 0 ? 0.0 : static_cast<double>(s.rejected) / static_cast<double>(requested);
  return s;
}

static std::string reject_reason(const Error& e) {
  switch (e.code()) {
    case Errc::no_markers: return "no markers";
    case Errc::fewer_than_two_utterances: return "fewer than two utterances";
    default: return e.what();
  }
}

PseudoBatch generate_batch(std::span<const NLIProblem> problems, const SamplingParams& params, Gateway& gateway,
                           const PseudoOptions& options) {
  const auto one = params.with_samples(1);
  one.validate();
  struct Item {
    std::optional<DiscussionRecord> record;
    std::string reason;
    std::vector<std::string> warnings;
  };
  auto items = parallel_map(problems.size(), options.jobs, [&](std::size_t i) {
    const NLIProblem& p = problems[i];
    Item item;
    const auto roles = assign_roles(p.gold_label, derive_seed(options.seed, fnv1a64(p.id)));
    const auto prompt = render_pseudo_gen(p, roles.human1, roles.human2, roles.final_label);
    for (std::size_t attempt = 0; attempt < 2 && !item.record; ++attempt) {
      try {
        auto completions = gateway.complete(prompt, one, options.run_id, attempt);
        std::vector<std::string> warnings;
        auto rec = parse_discussion(completions.front().text, roles, p.id, &warnings);
        rec.created_at = options.created_at;
        validate(rec);
        item.record = std::move(rec);
        item.warnings = std::move(warnings);
      } catch (const Error& e) {
        item.reason = reject_reason(e);
      }
    }
    return item;
  });

  PseudoBatch batch;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& item = items[i];
    if (item.record) {
      batch.records.push_back(std::move(*item.record));
      batch.warnings.insert(batch.warnings.end(), item.warnings.begin(), item.warnings.end());
    } else {
      batch.rejects.push_back({problems[i].id, item.reason});
    }
  }
  batch.stats = pseudo_stats(batch.records, problems.size());
  return batch;
}

ExportSummary export_finetune(std::span<const DiscussionRecord> records,
                              const std::map<std::string, NLIProblem>& problems, const std::filesystem::path& path) {
  std::string data;
  for (const auto& rec : records) {
    auto it = problems.find(rec.problem_id);
    if (it == problems.end()) throw Error(Errc::invalid_argument, "unknown problem '" + rec.problem_id + "'");
    json line;
    line["premise"] = it->second.premise;
    line["hypothesis"] = it->second.hypothesis;
    line["discussion"] = render_discussion_block(rec);
    line["label"] = to_string(rec.final_label);
    data += line.dump() + "\n";
  }
  ExportSummary summary;
  summary.rows = records.size();
  summary.data = path;
  summary.metadata = path.parent_path() / (path.stem().string() + ".meta.json");
  json meta = {{"format", "nlidisc-finetune-v1"},
               {"data", path.filename().string()},
               {"rows", records.size()},
               {"fields", {"premise", "hypothesis", "discussion", "label"}},
               {"reference_hyperparameters", {{"batch_size", 128}, {"learning_rate", 2e-5}, {"epochs", 3}}},
               {"note", "Hyperparameters are recorded for reference; no training is run."}};
  write_file(path.string(), data);
  write_file(summary.metadata.string(), meta.dump(2) + "\n");
  return summary;
}

std::vector<FinetuneRow> read_finetune(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, path.string());
  std::vector<FinetuneRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      FinetuneRow r;
      r.premise = j.at("premise").get<std::string>();
      r.hypothesis = j.at("hypothesis").get<std::string>();
      r.discussion = j.at("discussion").get<std::string>();
      auto label = label_from_string(j.at("label").get<std::string>());
      if (!label) throw Error(Errc::unknown_label, j.at("label").get<std::string>());
      r.label = *label;
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_line, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace nlidisc
