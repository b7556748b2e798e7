#include "support.hpp"

#include <atomic>
#include <map>
#include <random>

#include "nlidisc/error.hpp"
#include "nlidisc/gateway.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/rng.hpp"

#ifndef NLIDISC_FIXTURE_DIR
#error "NLIDISC_FIXTURE_DIR must be defined"
#endif

namespace nlidisc::testing {

std::filesystem::path fixture(const std::string& relative) {
  return std::filesystem::path(NLIDISC_FIXTURE_DIR) / relative;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("nlidisc-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<NLIProblem> fixture_problems() {
  std::vector<NLIProblem> out;
  const std::pair<const char*, Source> files[] = {{"corpora/snli_dev.jsonl", Source::snli_dev},
                                                  {"corpora/anli_r1.jsonl", Source::anli_r1},
                                                  {"corpora/anli_r2.jsonl", Source::anli_r2},
                                                  {"corpora/anli_r3.jsonl", Source::anli_r3}};
  for (const auto& [file, source] : files) {
    auto loaded = load_corpus(fixture(file), source);
    out.insert(out.end(), loaded.problems.begin(), loaded.problems.end());
  }
  return out;
}

std::vector<Exemplar> fixture_exemplars() { return load_exemplars(fixture("exemplars.jsonl")); }

std::vector<DiscussionRecord> fixture_records() { return load_records(fixture("records.jsonl")); }

std::vector<NLIProblem> synthetic_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NLIProblem> out;
  for (std::size_t i = 0; i < n; ++i) {
    NLIProblem p;
    p.id = "syn-" + std::to_string(i);
    p.premise = "Premise number " + std::to_string(i) + ".";
    p.hypothesis = "Hypothesis number " + std::to_string(i) + ".";
    p.source = Source::custom;
    const auto majority = static_cast<std::size_t>(rng.between(2, 5));
    const Label top = kAllLabels[rng.below(3)];
    std::vector<Label> labels(majority, top);
    std::vector<Label> others;
    for (Label l : kAllLabels)
      if (l != top) others.push_back(l);
    // Fill the rest without letting another label reach the majority.
    std::size_t k = 0;
    while (labels.size() < 5) labels.push_back(others[k++ % 2]);
    rng.shuffle(std::span(labels));
    p.gold_label = top;
    p.annotator_labels = labels;
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<Target> target_of(const std::string& prompt) {
  const auto p = prompt.rfind("Premise: ");
  if (p == std::string::npos) return std::nullopt;
  const auto h = prompt.find("Hypothesis: ", p);
  if (h == std::string::npos) return std::nullopt;
  Target t;
  t.premise = prompt.substr(p + 9, h - p - 9);
  while (!t.premise.empty() && (t.premise.back() == ' ' || t.premise.back() == '\n')) t.premise.pop_back();
  const auto begin = h + 12;
  auto end = prompt.find('\n', begin);
  const auto label = prompt.find(" Label: ", begin);
  if (label != std::string::npos && (end == std::string::npos || label < end)) end = label;
  t.hypothesis = prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
  return t;
}

Label wrong_label(const NLIProblem& problem) {
  for (Label l : kAllLabels)
    if (l != problem.gold_label && (fnv1a64(problem.id) % 2 == 0 || l != Label::neutral)) return l;
  return problem.gold_label == Label::entailment ? Label::contradiction : Label::entailment;
}

Label half_right(const NLIProblem& problem) {
  return fnv1a64(problem.id) % 2 == 0 ? problem.gold_label : wrong_label(problem);
}

std::shared_ptr<FunctionBackend> nli_mock(std::span<const NLIProblem> problems, NliMockOptions options) {
  std::map<std::pair<std::string, std::string>, NLIProblem> by_text;
  for (const auto& p : problems) by_text[{p.premise, p.hypothesis}] = p;
  if (!options.initial) options.initial = [](const NLIProblem& p) { return p.gold_label; };
  return std::make_shared<FunctionBackend>(
      options.id, [by_text = std::move(by_text), options](const CompletionRequest& req) {
        BackendReply reply;
        if (req.kind == PromptKind::session_turn) {
          reply.text = " I see. Let me think about that.";
          return reply;
        }
        auto t = target_of(req.prompt);
        auto it = t ? by_text.find({t->premise, t->hypothesis}) : by_text.end();
        if (it == by_text.end()) {
          reply.text = " I am not sure.";
          return reply;
        }
        const NLIProblem& p = it->second;
        Label answer = options.initial(p);
        if (req.kind == PromptKind::finalize) {
          switch (options.policy) {
            case FinalPolicy::oracle: answer = p.gold_label; break;
            case FinalPolicy::stubborn: break;
            case FinalPolicy::capitulating: {
              const auto start = req.prompt.find("\nHuman: ");
              const auto stop = req.prompt.find(" System:", start);
              if (start != std::string::npos)
                answer = parse_label(req.prompt.substr(start + 8, stop == std::string::npos ? std::string::npos
                                                                                            : stop - start - 8));
              break;
            }
          }
        }
        reply.text = " " + std::string(to_string(answer));
        return reply;
      });
}

std::shared_ptr<FunctionBackend> echo_backend(std::span<const DiscussionRecord> records,
                                              std::span<const NLIProblem> problems, bool supportive_only) {
  std::map<std::string, std::string> premise_of;
  for (const auto& p : problems) premise_of[p.id] = p.premise;
  // (premise, prefix) -> reply
  std::map<std::pair<std::string, std::string>, std::string> answers;
  for (const auto& r : records)
    for (const auto& u : r.utterances) {
      const bool echo = !supportive_only || u.tag == ContributionTag::supportive;
      answers[{premise_of[r.problem_id], context_prefix(r, u.index)}] =
          " " + (echo ? u.text : std::string("Quarterly revenue figures arrive by mail on Tuesdays."));
    }
  return std::make_shared<FunctionBackend>("echo", [answers = std::move(answers)](const CompletionRequest& req) {
    BackendReply reply;
    auto t = target_of(req.prompt);
    const auto d = req.prompt.rfind(" Discussion: ");
    if (!t || d == std::string::npos) throw Error(Errc::backend_unavailable, "echo backend: unexpected prompt");
    auto it = answers.find({t->premise, req.prompt.substr(d + 13)});
    if (it == answers.end()) throw Error(Errc::backend_unavailable, "echo backend: unknown prefix");
    reply.text = it->second;
    return reply;
  });
}

}  // namespace nlidisc::testing
