// Acceptance checks. One PASS/FAIL line per criterion; a criterion fails when
// its check fails or when it runs past its time limit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "golden.hpp"
#include "nlidisc/backends.hpp"
#include "nlidisc/harness.hpp"
#include "nlidisc/noise.hpp"
#include "nlidisc/pseudogen.hpp"
#include "nlidisc/stats.hpp"
#include "nlidisc/text.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace nlidisc;
namespace fx = nlidisc::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Collects the first few failures of a check.
class Tally {
 public:
  void expect(bool cond, const std::string& what) {
    if (cond) return;
    ++failures_;
    if (first_.size() < 3) first_.push_back(what);
  }
  Outcome done(const std::string& summary) const {
    if (failures_ == 0) return {true, summary};
    std::string d = std::to_string(failures_) + " failure(s): ";
    for (std::size_t i = 0; i < first_.size(); ++i) d += (i ? "; " : "") + first_[i];
    return {false, d};
  }

 private:
  std::size_t failures_ = 0;
  std::vector<std::string> first_;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

constexpr std::array kModes = {PromptMode::zero_shot, PromptMode::few_shot, PromptMode::few_shot_discussion};

Outcome golden_prompts() {
  Tally t;
  const auto mismatched = fx::check_golden_files();
  for (const auto& name : mismatched) t.expect(false, name + " differs from its golden file");
  const auto first = fx::golden_cases();
  const auto second = fx::golden_cases();
  t.expect(first.size() == second.size(), "case count changed between renders");
  bool continuation = false, pseudo = false;
  for (std::size_t i = 0; i < std::min(first.size(), second.size()); ++i) {
    t.expect(fx::golden_text(first[i].prompt) == fx::golden_text(second[i].prompt), first[i].name + " unstable");
    const auto& text = first[i].prompt.text;
    if (text.find("Label: entailment or neutral Discussion:") != std::string::npos) continuation = true;
    if (first[i].prompt.kind == PromptKind::pseudo_gen) pseudo = true;
  }
  t.expect(continuation, "no continuation case with \"Label: entailment or neutral Discussion:\"");
  t.expect(pseudo, "no pseudo-generation case");
  return t.done(std::to_string(first.size()) + " golden files byte-identical, rendered twice");
}

Outcome scorer_oracle() {
  Tally t;
  Rng rng(20240501);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t dim = rng.between(1, 16);
    const auto cand = fx::random_sequence(rng, rng.between(1, 8), dim);
    const auto ref = fx::random_sequence(rng, rng.between(1, 8), dim);
    for (bool clamp : {true, false}) {
      const auto got = greedy_match_score(cand, ref, {clamp});
      const auto want = fx::brute_force_score(cand, ref, clamp);
      const double d = std::max({std::fabs(got.precision - want.precision), std::fabs(got.recall - want.recall),
                                 std::fabs(got.f1 - want.f1)});
      worst = std::max(worst, d);
      t.expect(d <= 1e-9, "trial " + std::to_string(trial) + " off by " + fmt(d));
    }
  }
  for (int trial = 0; trial < 100; ++trial) {
    const auto seq = fx::random_sequence(rng, rng.between(1, 8), rng.between(1, 16));
    const auto s = greedy_match_score(seq, seq);
    t.expect(std::fabs(s.precision - 1) <= 1e-12 && std::fabs(s.recall - 1) <= 1e-12 && std::fabs(s.f1 - 1) <= 1e-12,
             "identity trial " + std::to_string(trial) + " is not (1,1,1)");
  }
  return t.done("1000 instances x {clamped, raw}, max |d| = " + fmt(worst) + "; identity = (1,1,1)");
}

Outcome statistics_oracles() {
  Tally t;
  Rng rng(77);
  double worst_welch = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> xs(rng.between(2, 40));
    std::vector<double> ys(rng.between(2, 40));
    const double shift = rng.unit() * 2.0 - 1.0;
    const double sx = 0.05 + rng.unit();
    const double sy = 0.05 + 3 * rng.unit();
    for (double& x : xs) x = sx * (rng.unit() - 0.5);
    for (double& y : ys) y = shift + sy * (rng.unit() - 0.5);
    const double d = std::fabs(welch_t_test(xs, ys).p_value - fx::welch_oracle(xs, ys));
    worst_welch = std::max(worst_welch, d);
    t.expect(d <= 1e-6, "welch case " + std::to_string(trial) + " off by " + fmt(d));
  }
  double worst_mc = 0.0;
  int tables = 0;
  for (unsigned b = 0; b <= 24; ++b) {
    for (unsigned c = 0; b + c <= 24; ++c, ++tables) {
      const auto r = mcnemar_test(b, c);
      const double d = std::fabs(r.p_value - fx::exact_mcnemar_oracle(b, c));
      worst_mc = std::max(worst_mc, d);
      t.expect(r.test == StatTest::mcnemar_exact, "(" + std::to_string(b) + "," + std::to_string(c) + ") not exact");
      t.expect(d <= 1e-12, "mcnemar (" + std::to_string(b) + "," + std::to_string(c) + ") off by " + fmt(d));
    }
  }
  t.expect(mcnemar_test(10, 0).p_value == 2.0 * std::pow(0.5, 10), "b=10,c=0 is not 2*(1/2)^10");
  return t.done("welch 50 cases max |d| = " + fmt(worst_welch) + "; mcnemar " + std::to_string(tables) +
                " tables max |d| = " + fmt(worst_mc) + "; b=10,c=0 exact");
}

Outcome corpus_filter() {
  Tally t;
  const auto corpus = fx::synthetic_corpus(1000, 8);
  std::set<std::string> expected, got;
  for (const auto& p : corpus)
    if (fx::brute_three_of_five(p)) expected.insert(p.id);
  for (const auto& p : filter_three_of_five(corpus).kept) got.insert(p.id);
  t.expect(got == expected, "selected set differs from the brute-force tally");
  t.expect(!expected.empty() && expected.size() < corpus.size(), "degenerate synthetic corpus");
  return t.done(std::to_string(got.size()) + " of 1000 selected, equal to brute-force tally");
}

std::vector<NLIProblem> scenario_problems() {
  auto problems = fx::synthetic_corpus(20, 3);
  const std::array sources = {Source::snli_dev, Source::anli_r1, Source::anli_r2, Source::anli_r3};
  for (std::size_t i = 0; i < problems.size(); ++i) problems[i].source = sources[i % 4];
  return problems;
}

ScenarioRun run_scenarios(fx::FinalPolicy policy) {
  const auto problems = scenario_problems();
  Gateway gw(fx::nli_mock(problems, {policy, fx::half_right}));
  EvalContext ctx{gw, SamplingParams{}, PromptConfig{}, 2, "scenarios", 17};
  TemplateAgent agent(2);
  return eval_scenarios(problems, kModes, fx::fixture_exemplars(), agent, ctx);
}

Outcome session_state_machine() {
  Tally t;
  const auto oracle = run_scenarios(fx::FinalPolicy::oracle);
  for (const auto& row : oracle.rates.rows)
    t.expect(row.cells[0] == 1.0 && row.cells[1] == 1.0, "oracle rates not 1.0 for " + row.label);
  for (const auto& row : oracle.before_after.rows) t.expect(row.cells[1] == 1.0, "oracle after != 1.0 " + row.label);

  const auto capit = run_scenarios(fx::FinalPolicy::capitulating);
  double share = 0.0;
  for (std::size_t m = 0; m < kModes.size(); ++m) {
    const auto& outs = capit.outcomes.at(kModes[m]);
    const auto n_acc = std::count_if(outs.begin(), outs.end(),
                                     [](const auto& o) { return o.kind == ScenarioKind::acceptance; });
    share = static_cast<double>(n_acc) / static_cast<double>(outs.size());
    t.expect(outs.size() == 20, "capitulating run lost problems");
    t.expect(capit.rates.rows[m].cells[1] == 0.0, "capitulating objection != 0 " + capit.rates.rows[m].label);
    t.expect(capit.before_after.rows[m].cells[1] == share, "capitulating after != acceptance fraction");
  }
  t.expect(share > 0.0 && share < 1.0, "fixture does not mix acceptance and objection");

  const auto stubborn = run_scenarios(fx::FinalPolicy::stubborn);
  for (const auto& row : stubborn.rates.rows)
    t.expect(row.cells[0] == 0.0 && row.cells[1] == 1.0, "stubborn rates wrong for " + row.label);
  return t.done("oracle 1/1/1, capitulating 0 objection with after = " + fmt(share) +
                ", stubborn 0/1 across 3 modes x 20 problems");
}

Outcome noise_injectors() {
  Tally t;
  const auto exemplars = fx::fixture_exemplars();
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto out = apply_noise(exemplars, {NoiseKind::truncate_discussion, seed});
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
      const auto& before = exemplars[i].discussion->utterances;
      const auto& after = out.exemplars[i].discussion->utterances;
      bool prefix = !after.empty() && after.size() < before.size() &&
                    std::equal(after.begin(), after.end(), before.begin());
      t.expect(prefix, "truncation seed " + std::to_string(seed) + " is not a strict prefix");
    }
  }

  std::map<Label, int> counts;
  int draws = 0;
  for (std::uint64_t seed = 0; draws < 3000; ++seed) {
    for (const auto& ex : apply_noise(exemplars, {NoiseKind::random_label, seed}).exemplars) {
      if (draws == 3000) break;
      ++counts[ex.problem.gold_label];
      ++draws;
    }
  }
  const double sigma = std::sqrt(draws * (1.0 / 3.0) * (2.0 / 3.0));
  double worst_z = 0.0;
  for (Label l : kAllLabels) {
    const double z = std::fabs(counts[l] - draws / 3.0) / sigma;
    worst_z = std::max(worst_z, z);
    t.expect(z <= 3.0, std::string(to_string(l)) + " is " + fmt(z) + " sigma off");
  }

  auto pool = fx::fixture_records();
  for (const auto& ex : exemplars) pool.push_back(*ex.discussion);
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const auto out = apply_noise(exemplars, {NoiseKind::random_discussion, seed}, pool);
    for (std::size_t i = 0; i < exemplars.size(); ++i)
      if (!out.exemplars[i].discussion || out.exemplars[i].discussion->problem_id == exemplars[i].problem.id)
        ++violations;
  }
  t.expect(violations == 0, std::to_string(violations) + " own-discussion assignments");
  return t.done("500 truncations prefix-exact; random-label max " + fmt(worst_z) +
                " sigma over 3000 draws; 0 own-discussion picks in 500 trials");
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
  return files;
}

Outcome end_to_end_determinism() {
  Tally t;
  fx::TempDir tmp;
  std::size_t files = 0;
  for (std::string kind : {"nli", "generation", "ablation"}) {
    auto args = [&](const fs::path& out) {
      std::vector<std::string> a = {"eval", kind, "--corpus"};
      for (const char* c : {"snli-dev", "anli-r1", "anli-r2", "anli-r3"}) {
        std::string file = c;
        std::replace(file.begin(), file.end(), '-', '_');
        a.push_back(std::string(c) + "=" + fx::fixture("corpora/" + file + ".jsonl").string());
      }
      for (const std::string& s : std::vector<std::string>{"--exemplars", fx::fixture("exemplars.jsonl").string(),
                                                           "--backend", "mock", "--seed", "7", "--out", out.string()})
        a.push_back(s);
      if (kind == "generation") a.insert(a.end(), {"--records", fx::fixture("records.jsonl").string()});
      if (kind == "ablation") a.insert(a.end(), {"--pool", fx::fixture("records.jsonl").string()});
      return a;
    };
    std::ostringstream out, err;
    const fs::path a = tmp / (kind + "-a"), b = tmp / (kind + "-b"), c = tmp / (kind + "-replay");
    t.expect(cli::run(args(a), out, err) == 0, kind + " first run failed: " + err.str());
    t.expect(cli::run(args(b), out, err) == 0, kind + " second run failed: " + err.str());
    const auto ra = read_tree(a / "reports");
    t.expect(!ra.empty(), kind + " wrote no reports");
    t.expect(ra == read_tree(b / "reports"), kind + " reports differ between runs");
    std::ostringstream rout;
    const int rc = cli::run({"replay", "--out", a.string(), "--into", c.string()}, rout, err);
    t.expect(rc == 0, kind + " replay exit " + std::to_string(rc) + ": " + rout.str());
    t.expect(ra == read_tree(c / "reports"), kind + " replay differs");
    files += ra.size();
  }
  return t.done(std::to_string(files) + " report files identical across reruns and offline replay");
}

Outcome pseudogen_pipeline() {
  Tally t;
  const auto problems = fx::synthetic_corpus(50, 21);
  Gateway gw(std::make_shared<MockBackend>());
  const auto batch = generate_batch(problems, SamplingParams{}, gw, {.seed = 4, .jobs = 2});
  t.expect(batch.records.size() + batch.rejects.size() == 50, "records + rejects != 50");
  for (const auto& r : batch.records) {
    try {
      validate(r);
    } catch (const std::exception& e) {
      t.expect(false, r.problem_id + ": " + e.what());
    }
  }
  fx::TempDir dir;
  const auto index = index_problems(problems);
  const auto summary = export_finetune(batch.records, index, dir / "train.jsonl");
  const auto rows = read_finetune(summary.data);
  t.expect(rows.size() == batch.records.size(), "export row count");
  std::vector<DiscussionRecord> reparsed;
  for (std::size_t i = 0; i < std::min(rows.size(), batch.records.size()); ++i) {
    const auto& rec = batch.records[i];
    const RoleAssignment roles{rec.participant_labels.at(Speaker::human1), rec.participant_labels.at(Speaker::human2),
                               rec.final_label};
    const std::string prefix = "Discussion: ";
    t.expect(rows[i].discussion.starts_with(prefix), rec.problem_id + " export lacks the discussion marker");
    auto back = parse_discussion(std::string_view(rows[i].discussion).substr(prefix.size()), roles, rec.problem_id);
    t.expect(render_discussion_block(back) == rows[i].discussion, rec.problem_id + " does not re-render identically");
    t.expect(back.utterances == rec.utterances, rec.problem_id + " utterances changed");
    reparsed.push_back(std::move(back));
  }
  export_finetune(reparsed, index, dir / "again.jsonl");
  t.expect(read_file((dir / "again.jsonl").string()) == read_file(summary.data.string()), "re-export differs");
  return t.done(std::to_string(batch.records.size()) + " records + " + std::to_string(batch.rejects.size()) +
                " rejects = 50; all valid; export round-trips byte-identically");
}

Outcome report_shapes() {
  Tally t;
  auto check = [&](const EvalReport& report, int table) {
    std::ifstream in(fx::fixture("shapes/table" + std::to_string(table) + ".json"));
    const auto s = json::parse(in);
    const std::string tag = "table " + std::to_string(table);
    t.expect(std::string(to_string(report.kind)) == s["kind"].get<std::string>(), tag + " kind");
    t.expect(report.columns == s["columns"].get<std::vector<std::string>>(), tag + " columns");
    std::vector<std::string> rows;
    for (const auto& r : report.rows) {
      rows.push_back(r.label);
      t.expect(r.cells.size() == report.columns.size(), tag + " ragged row " + r.label);
    }
    t.expect(rows == s["rows"].get<std::vector<std::string>>(), tag + " rows");
  };

  const auto problems = fx::fixture_problems();
  const auto records = fx::fixture_records();
  const auto exemplars = fx::fixture_exemplars();
  {
    Gateway gw(fx::echo_backend(records, problems));
    EvalContext ctx{gw, SamplingParams{}.with_samples(2), PromptConfig{}};
    HashEmbeddingProvider emb(64, 1);
    const auto report = eval_generation(records, index_problems(problems), kModes, exemplars, emb, ctx);
    check(report, 1);
    t.expect(report.cell("few-shot-dis.", "diff.").has_value(), "few-shot-dis. has no diff. value");
  }
  {
    const auto run = run_scenarios(fx::FinalPolicy::oracle);
    check(run.rates, 2);
    check(run.before_after, 3);
  }
  {
    Gateway gw(fx::nli_mock(problems));
    EvalContext ctx{gw, SamplingParams{}, PromptConfig{}};
    check(eval_nli(problems, kModes, exemplars, ctx), 4);
    const std::vector<NoiseSpec> specs = {
        {NoiseKind::random_discussion, 1}, {NoiseKind::truncate_discussion, 2}, {NoiseKind::random_label, 3}};
    check(eval_ablation(problems, exemplars, specs, records, ctx), 5);
  }
  return t.done("tables 1-5 match their shape fixtures");
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "prompt-golden-files", 1.0, golden_prompts},
      {2, "scorer-oracle-equivalence", 10.0, scorer_oracle},
      {3, "statistics-oracles", 5.0, statistics_oracles},
      {4, "corpus-three-of-five-filter", 1.0, corpus_filter},
      {5, "session-state-machine", 5.0, session_state_machine},
      {6, "noise-injectors", 5.0, noise_injectors},
      {7, "end-to-end-determinism", 60.0, end_to_end_determinism},
      {8, "pseudogen-pipeline", 10.0, pseudogen_pipeline},
      {9, "report-shapes", 10.0, report_shapes},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.ok && secs > c.limit_seconds) o = {false, "took " + fmt(secs) + " s, limit " + fmt(c.limit_seconds) + " s"};
    if (!o.ok) ++failed;
    std::printf("%s [%d] %-28s %8.3fs (limit %gs)  %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                c.limit_seconds, o.detail.c_str());
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
