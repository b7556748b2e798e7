#include "nlidisc/harness.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "nlidisc/error.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/parallel.hpp"
#include "nlidisc/rng.hpp"

namespace nlidisc {

using nlohmann::json;

namespace {

const std::vector<std::string> kCorpusColumns = {"SNLI", "R1", "R2", "R3"};

std::string mode_row(PromptMode mode) { return std::string(table_row_name(mode)); }

double mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

json params_json(const SamplingParams& p) {
  json j = {{"temperature", p.temperature}, {"n_samples", p.n_samples}, {"max_tokens", p.max_tokens}};
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

std::vector<std::string> corpus_columns(std::span<const NLIProblem> problems) {
  auto cols = kCorpusColumns;
  for (const auto& p : problems)
    if (p.source == Source::custom) {
      cols.emplace_back(source_column(Source::custom));
      break;
    }
  return cols;
}

// Mark the best row of `column` when it beats every other row significantly.
void mark_dominant(EvalReport& report, const std::string& column,
                   const std::map<std::pair<std::string, std::string>, bool>& significant_pairs) {
  if (report.rows.size() < 2) return;
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    auto v = report.cell(report.rows[r].label, column);
    if (!v) return;
    if (!best || *v > *report.cell(report.rows[*best].label, column)) best = r;
  }
  const auto& winner = report.rows[*best].label;
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    if (r == *best) continue;
    const auto& other = report.rows[r].label;
    if (*report.cell(other, column) >= *report.cell(winner, column)) return;
    auto it = significant_pairs.find(std::minmax(winner, other));
    if (it == significant_pairs.end() || !it->second) return;
  }
  report.rows[*best].marked.insert(column);
}

// McNemar over paired correctness vectors.
StatTestResult paired_mcnemar(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::uint64_t only_a = 0, only_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && !b[i]) ++only_a;
    if (!a[i] && b[i]) ++only_b;
  }
  return mcnemar_test(only_a, only_b);
}

}  // namespace

ProblemIndex index_problems(std::span<const NLIProblem> problems) {
  ProblemIndex out;
  for (const auto& p : problems)
    if (!out.emplace(p.id, p).second) throw Error(Errc::duplicate_id, "problem id '" + p.id + "'");
  return out;
}

std::span<const Exemplar> exemplars_for(PromptMode mode, std::span<const Exemplar> exemplars) noexcept {
  if (mode == PromptMode::zero_shot) return {};
  return exemplars;
}

json run_metadata(const EvalContext& ctx, std::span<const Exemplar> exemplars) {
  Sha256 prompts;
  prompts.update_field(ctx.prompts.task_description).update_field(ctx.prompts.finalize_cue);
  json fps = json::array();
  for (const auto& ex : exemplars) fps.push_back(sha256_hex(to_json(ex).dump()));
  return {{"seed", ctx.seed},
          {"backend", ctx.gateway.backend_id()},
          {"params", params_json(ctx.params)},
          {"prompt_config", prompts.hex_digest()},
          {"exemplars", fps}};
}

// ---------------------------------------------------------------- generation

EvalReport eval_generation(std::span<const DiscussionRecord> records, const ProblemIndex& problems,
                           std::span<const PromptMode> modes, std::span<const Exemplar> exemplars,
                           EmbeddingProvider& provider, EvalContext& ctx) {
  ctx.params.validate();
  struct Target {
    const DiscussionRecord* record;
    std::size_t k;
    ContributionTag tag;
    const NLIProblem* problem;
  };
  std::vector<Target> targets;
  for (const auto& rec : records) {
    for (const auto& u : rec.utterances)
      if (!u.tag)
        throw Error(Errc::untagged_utterance,
                    "record '" + rec.problem_id + "' utterance " + std::to_string(u.index));
    auto pit = problems.find(rec.problem_id);
    if (pit == problems.end()) throw Error(Errc::invalid_argument, "unknown problem '" + rec.problem_id + "'");
    if (!rec.participant_labels.count(Speaker::human1) || !rec.participant_labels.count(Speaker::human2))
      throw Error(Errc::invalid_argument, "record '" + rec.problem_id + "' is not a Human1/Human2 discussion");
    for (const auto& u : rec.utterances)
      if (*u.tag != ContributionTag::irrelevant) targets.push_back({&rec, u.index, *u.tag, &pit->second});
  }

  EvalReport report;
  report.kind = ReportKind::generation;
  report.title = "Utterance generation similarity (F1)";
  report.columns = {"supportive", "unsupportive", "diff."};
  report.metadata = run_metadata(ctx, exemplars);
  report.metadata["embedding"] = provider.id();
  report.metadata["items"] = targets.size();

  struct Item {
    std::string fingerprint;
    std::vector<ScoreTriple> samples;
    std::string error;
  };

  json per_mode = json::object();
  for (PromptMode mode : modes) {
    auto items = parallel_map(targets.size(), ctx.jobs, [&](std::size_t i) {
      const Target& t = targets[i];
      Item item;
      const auto& labels = t.record->participant_labels;
      auto prompt = render_continuation(mode, exemplars_for(mode, exemplars), *t.problem,
                                        {labels.at(Speaker::human1), labels.at(Speaker::human2)},
                                        context_prefix(*t.record, t.k), t.record->utterances[t.k].speaker,
                                        ctx.prompts);
      item.fingerprint = prompt.fingerprint;
      try {
        auto completions = ctx.gateway.complete(prompt, ctx.params, ctx.run_id);
        std::vector<std::string> texts{t.record->utterances[t.k].text};
        for (const auto& c : completions) texts.push_back(c.text);
        auto emb = provider.embed(texts);
        if (emb.size() != texts.size()) throw Error(Errc::dimension_mismatch, "embedding count mismatch");
        if (emb[0].empty()) throw Error(Errc::empty_sequence, "reference has no tokens");
        for (std::size_t c = 1; c < emb.size(); ++c)
          item.samples.push_back(emb[c].empty() ? ScoreTriple{} : greedy_match_score(emb[c], emb[0]));
      } catch (const Error& e) {
        item.error = e.what();
        item.samples.clear();
      }
      return item;
    });

    json listing = json::array();
    std::size_t failures = 0;
    // per-sample-index F1 sums, per tag
    std::vector<double> sup_sum(ctx.params.n_samples, 0.0), unsup_sum(ctx.params.n_samples, 0.0);
    std::size_t sup_n = 0, unsup_n = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      const auto& item = items[i];
      json entry = {{"problem_id", t.record->problem_id},
                    {"utterance", t.k},
                    {"tag", to_string(t.tag)},
                    {"prompt_fingerprint", item.fingerprint}};
      if (!item.error.empty()) {
        ++failures;
        entry["error"] = item.error;
        listing.push_back(entry);
        continue;
      }
      std::vector<double> f1s;
      for (const auto& s : item.samples) f1s.push_back(s.f1);
      entry["f1"] = f1s;
      entry["mean_f1"] = mean(f1s);
      listing.push_back(entry);
      auto& sums = t.tag == ContributionTag::supportive ? sup_sum : unsup_sum;
      for (std::size_t j = 0; j < f1s.size(); ++j) sums[j] += f1s[j];
      (t.tag == ContributionTag::supportive ? sup_n : unsup_n) += 1;
    }

    ReportRow row;
    row.label = mode_row(mode);
    std::vector<double> xs, ys;
    if (sup_n > 0)
      for (double s : sup_sum) xs.push_back(s / static_cast<double>(sup_n));
    if (unsup_n > 0)
      for (double s : unsup_sum) ys.push_back(s / static_cast<double>(unsup_n));
    std::optional<double> sup = xs.empty() ? std::nullopt : std::optional(mean(xs));
    std::optional<double> unsup = ys.empty() ? std::nullopt : std::optional(mean(ys));
    std::optional<double> diff;
    if (sup && unsup) diff = *sup - *unsup;
    row.cells = {sup, unsup, diff};

    json mode_details = {{"items", listing},
                         {"failures", failures},
                         {"supportive_count", sup_n},
                         {"unsupportive_count", unsup_n}};
    if (!xs.empty() && !ys.empty()) {
      try {
        auto res = welch_t_test(xs, ys);
        report.significance.push_back({row.label, "diff.", "supportive vs unsupportive", res});
        if (res.significant()) row.marked = {"supportive", "unsupportive"};
      } catch (const Error& e) {
        mode_details["significance_note"] = e.what();
      }
    }
    report.rows.push_back(std::move(row));
    per_mode[std::string(to_string(mode))] = mode_details;
  }
  report.details = {{"modes", per_mode}};
  return report;
}

// ----------------------------------------------------------------------- NLI

std::vector<NliPrediction> predict_nli(std::span<const NLIProblem> problems, PromptMode mode,
                                       std::span<const Exemplar> exemplars, EvalContext& ctx) {
  const auto params = ctx.params.with_samples(1);
  params.validate();
  return parallel_map(problems.size(), ctx.jobs, [&](std::size_t i) {
    const NLIProblem& p = problems[i];
    NliPrediction out;
    out.problem_id = p.id;
    out.source = p.source;
    out.gold_label = p.gold_label;
    auto prompt = render_task_prompt(mode, exemplars_for(mode, exemplars), p, ctx.prompts);
    out.prompt_fingerprint = prompt.fingerprint;
    try {
      auto completions = ctx.gateway.complete(prompt, params, ctx.run_id);
      out.predicted = parse_label(completions.front().text);
    } catch (const Error& e) {
      out.error = e.what();
    }
    return out;
  });
}

static json predictions_json(const std::vector<NliPrediction>& preds) {
  json arr = json::array();
  for (const auto& p : preds) {
    json j = {{"problem_id", p.problem_id},
              {"source", to_string(p.source)},
              {"gold_label", to_string(p.gold_label)},
              {"predicted", p.predicted ? json(to_string(*p.predicted)) : json(nullptr)},
              {"prompt_fingerprint", p.prompt_fingerprint}};
    if (!p.error.empty()) j["error"] = p.error;
    arr.push_back(j);
  }
  return arr;
}

static std::map<std::string, std::optional<double>> accuracy_by_column(const std::vector<NliPrediction>& preds,
                                                                       const std::vector<std::string>& columns) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (const auto& p : preds) {
    auto& t = tally[std::string(source_column(p.source))];
    t.first += p.correct() ? 1 : 0;
    t.second += 1;
  }
  std::map<std::string, std::optional<double>> out;
  for (const auto& c : columns) {
    auto it = tally.find(c);
    out[c] = it == tally.end() ? std::nullopt
                               : std::optional(static_cast<double>(it->second.first) /
                                               static_cast<double>(it->second.second));
  }
  return out;
}

EvalReport eval_nli(std::span<const NLIProblem> problems, std::span<const PromptMode> modes,
                    std::span<const Exemplar> exemplars, EvalContext& ctx) {
  EvalReport report;
  report.kind = ReportKind::nli_accuracy;
  report.title = "NLI accuracy";
  report.columns = corpus_columns(problems);
  report.metadata = run_metadata(ctx, exemplars);
  report.metadata["items"] = problems.size();

  std::vector<std::vector<NliPrediction>> runs;
  json per_mode = json::object();
  for (PromptMode mode : modes) {
    runs.push_back(predict_nli(problems, mode, exemplars, ctx));
    const auto& preds = runs.back();
    auto acc = accuracy_by_column(preds, report.columns);
    ReportRow row;
    row.label = mode_row(mode);
    for (const auto& c : report.columns) row.cells.push_back(acc[c]);
    report.rows.push_back(std::move(row));
    std::size_t abstentions = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return !p.predicted; });
    per_mode[std::string(to_string(mode))] = {{"predictions", predictions_json(preds)}, {"abstentions", abstentions}};
  }

  for (const auto& column : report.columns) {
    std::map<std::pair<std::string, std::string>, bool> sig;
    for (std::size_t a = 0; a < runs.size(); ++a)
      for (std::size_t b = a + 1; b < runs.size(); ++b) {
        std::vector<bool> ca, cb;
        for (std::size_t i = 0; i < problems.size(); ++i)
          if (source_column(problems[i].source) == column) {
            ca.push_back(runs[a][i].correct());
            cb.push_back(runs[b][i].correct());
          }
        if (ca.empty()) continue;
        auto res = paired_mcnemar(ca, cb);
        const auto& la = report.rows[a].label;
        const auto& lb = report.rows[b].label;
        report.significance.push_back({la, column, la + " vs " + lb, res});
        sig[std::minmax(la, lb)] = res.significant();
      }
    mark_dominant(report, column, sig);
  }
  report.details = {{"modes", per_mode}};
  return report;
}

// ------------------------------------------------------------------ scenarios

ScenarioRun eval_scenarios(std::span<const NLIProblem> problems, std::span<const PromptMode> modes,
                           std::span<const Exemplar> exemplars, ScriptedAgent& agent, EvalContext& ctx,
                           int turn_budget) {
  if (turn_budget < 1) throw Error(Errc::invalid_argument, "turn budget must be positive");
  // Planned half/half split, shared by all modes.
  std::vector<std::size_t> order(problems.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(ctx.seed, 0x5CE4A210));
  rng.shuffle(std::span(order));
  std::vector<ScenarioKind> planned(problems.size());
  const std::size_t n_accept = (problems.size() + 1) / 2;
  for (std::size_t i = 0; i < order.size(); ++i)
    planned[order[i]] = i < n_accept ? ScenarioKind::acceptance : ScenarioKind::objection;

  ScenarioRun run;
  run.rates.kind = ReportKind::scenario;
  run.rates.title = "Acceptance and objection rates";
  run.rates.columns = {"Acceptance rate", "Objection rate"};
  run.before_after.kind = ReportKind::before_after;
  run.before_after.title = "Accuracy before and after discussion";
  run.before_after.columns = {"Before", "After"};
  auto meta = run_metadata(ctx, exemplars);
  meta["items"] = problems.size();
  meta["turn_budget"] = turn_budget;
  run.rates.metadata = run.before_after.metadata = meta;

  struct Item {
    std::optional<ScenarioOutcome> outcome;
    std::string error;
  };
  SessionContext sctx{ctx.gateway, ctx.params.with_samples(1), ctx.prompts, ctx.run_id};
  std::map<PromptMode, std::vector<Item>> all;
  json per_mode = json::object();
  for (PromptMode mode : modes) {
    auto items = parallel_map(problems.size(), ctx.jobs, [&](std::size_t i) {
      const NLIProblem& p = problems[i];
      Item item;
      ScenarioOptions opts{turn_budget, "scenario-" + std::string(to_string(mode)) + "-" + p.id, ctx.seed};
      try {
        std::vector<Exemplar> ex;
        auto used = exemplars_for(mode, exemplars);
        ex.assign(used.begin(), used.end());
        auto state = start_session(opts.session_id, p, mode, std::move(ex), sctx);
        // The initial prediction decides which scenario is possible.
        auto kind = state.initial_system_label == p.gold_label ? ScenarioKind::objection : ScenarioKind::acceptance;
        item.outcome = drive_scenario(std::move(state), kind, agent, sctx, opts);
      } catch (const Error& e) {
        item.error = e.what();
      }
      return item;
    });

    json outcomes = json::array();
    json reassigned = json::array();
    std::size_t acc_n = 0, acc_ok = 0, obj_n = 0, obj_ok = 0, failures = 0;
    std::vector<bool> before, after;
    for (std::size_t i = 0; i < problems.size(); ++i) {
      const auto& item = items[i];
      if (!item.outcome) {
        ++failures;
        outcomes.push_back({{"problem_id", problems[i].id}, {"error", item.error}});
        continue;
      }
      const auto& o = *item.outcome;
      run.outcomes[mode].push_back(o);
      outcomes.push_back(to_json(o));
      if (o.kind != planned[i])
        reassigned.push_back({{"problem_id", o.problem_id},
                              {"planned", to_string(planned[i])},
                              {"assigned", to_string(o.kind)}});
      if (o.kind == ScenarioKind::acceptance) {
        ++acc_n;
        acc_ok += o.success ? 1 : 0;
      } else {
        ++obj_n;
        obj_ok += o.success ? 1 : 0;
      }
      before.push_back(o.initial_label == o.gold_label);
      after.push_back(o.final_label == o.gold_label);
    }
    auto rate = [](std::size_t ok, std::size_t n) {
      return n == 0 ? std::nullopt : std::optional(static_cast<double>(ok) / static_cast<double>(n));
    };
    const std::string label = mode_row(mode);
    run.rates.rows.push_back({label, {rate(acc_ok, acc_n), rate(obj_ok, obj_n)}, {}});

    auto count_true = [](const std::vector<bool>& v) {
      return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
    };
    ReportRow ba{label, {rate(count_true(before), before.size()), rate(count_true(after), after.size())}, {}};
    if (!before.empty()) {
      auto res = paired_mcnemar(before, after);
      run.before_after.significance.push_back({label, "After", "before vs after", res});
      if (res.significant() && count_true(after) > count_true(before)) ba.marked.insert("After");
    }
    run.before_after.rows.push_back(std::move(ba));
    per_mode[std::string(to_string(mode))] = {{"outcomes", outcomes},
                                              {"reassigned", reassigned},
                                              {"failures", failures},
                                              {"acceptance_attempts", acc_n},
                                              {"acceptance_successes", acc_ok},
                                              {"objection_attempts", obj_n},
                                              {"objection_successes", obj_ok}};
    all[mode] = std::move(items);
  }

  // Rates compared across modes on problems run under the same kind in both.
  const std::vector<std::pair<std::string, ScenarioKind>> cols = {{"Acceptance rate", ScenarioKind::acceptance},
                                                                  {"Objection rate", ScenarioKind::objection}};
  for (const auto& [column, kind] : cols) {
    std::map<std::pair<std::string, std::string>, bool> sig;
    for (std::size_t a = 0; a < modes.size(); ++a)
      for (std::size_t b = a + 1; b < modes.size(); ++b) {
        std::vector<bool> sa, sb;
        const auto& ia = all[modes[a]];
        const auto& ib = all[modes[b]];
        for (std::size_t i = 0; i < problems.size(); ++i)
          if (ia[i].outcome && ib[i].outcome && ia[i].outcome->kind == kind && ib[i].outcome->kind == kind) {
            sa.push_back(ia[i].outcome->success);
            sb.push_back(ib[i].outcome->success);
          }
        if (sa.empty()) continue;
        auto res = paired_mcnemar(sa, sb);
        const auto la = mode_row(modes[a]), lb = mode_row(modes[b]);
        run.rates.significance.push_back({la, column, la + " vs " + lb, res});
        sig[std::minmax(la, lb)] = res.significant();
      }
    mark_dominant(run.rates, column, sig);
  }
  run.rates.details = {{"modes", per_mode}};
  run.before_after.details = {{"modes", per_mode}};
  return run;
}

// ------------------------------------------------------------------- ablation

EvalReport eval_ablation(std::span<const NLIProblem> problems, std::span<const Exemplar> exemplars,
                         std::span<const NoiseSpec> specs, std::span<const DiscussionRecord> pool,
                         EvalContext& ctx, const std::vector<NliPrediction>* clean_baseline) {
  constexpr PromptMode mode = PromptMode::few_shot_discussion;
  EvalReport report;
  report.kind = ReportKind::ablation;
  report.title = "Accuracy change under noisy exemplars (noisy - clean)";
  report.columns = corpus_columns(problems);
  report.metadata = run_metadata(ctx, exemplars);
  report.metadata["items"] = problems.size();
  report.metadata["sign"] = "noisy - clean";

  std::vector<NliPrediction> clean_local;
  if (clean_baseline == nullptr) {
    clean_local = predict_nli(problems, mode, exemplars, ctx);
    clean_baseline = &clean_local;
  }
  if (clean_baseline->size() != problems.size())
    throw Error(Errc::invalid_argument, "baseline does not cover the problem set");
  auto clean_acc = accuracy_by_column(*clean_baseline, report.columns);

  std::map<std::string, int> seen;
  json spec_details = json::array();
  for (const auto& spec : specs) {
    auto noisy = apply_noise(exemplars, spec, pool);
    auto preds = predict_nli(problems, mode, noisy.exemplars, ctx);
    auto acc = accuracy_by_column(preds, report.columns);
    ReportRow row;
    row.label = std::string(table_row_name(spec.kind));
    if (seen[row.label]++ > 0) row.label += " (seed " + std::to_string(spec.seed) + ")";
    json accs = json::object();
    for (const auto& c : report.columns) {
      std::optional<double> delta;
      if (acc[c] && clean_acc[c]) delta = *acc[c] - *clean_acc[c];
      row.cells.push_back(delta);
      accs[c] = acc[c] ? json(*acc[c]) : json(nullptr);
    }
    spec_details.push_back({{"row", row.label},
                            {"kind", to_string(spec.kind)},
                            {"seed", spec.seed},
                            {"noise_log", noisy.log},
                            {"accuracy", accs},
                            {"predictions", predictions_json(preds)}});
    report.rows.push_back(std::move(row));
  }

  // Rows per column from most to least harmful.
  json ordering = json::object();
  for (std::size_t c = 0; c < report.columns.size(); ++c) {
    std::vector<std::size_t> idx(report.rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& va = report.rows[a].cells[c];
      const auto& vb = report.rows[b].cells[c];
      if (!va || !vb) return va.has_value() && !vb.has_value();
      return *va < *vb;
    });
    json names = json::array();
    for (auto i : idx)
      if (report.rows[i].cells[c]) names.push_back(report.rows[i].label);
    ordering[report.columns[c]] = names;
  }
  json clean = json::object();
  for (const auto& c : report.columns) clean[c] = clean_acc[c] ? json(*clean_acc[c]) : json(nullptr);
  report.details = {{"clean_accuracy", clean},
                    {"clean_predictions", predictions_json(*clean_baseline)},
                    {"noise", spec_details},
                    {"most_harmful_first", ordering}};
  return report;
}

}  // namespace nlidisc
