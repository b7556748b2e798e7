#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nlidisc/api_service.hpp"
#include "nlidisc/corpus.hpp"
#include "nlidisc/error.hpp"
#include "nlidisc/harness.hpp"
#include "nlidisc/hashing.hpp"
#include "nlidisc/metrics.hpp"
#include "nlidisc/pseudogen.hpp"
#include "nlidisc/text.hpp"
#include "run_dir.hpp"

namespace nlidisc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags shared by every subcommand that touches config or a backend.
struct Common {
  std::string config;
  std::string backend;
  std::string mock_script;
  std::string model;
  std::string base_url;
  std::string cache;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<double> temperature;
  std::optional<int> samples;
  std::vector<std::string> set;
};

// What an experiment reads. Stored verbatim in the manifest and fed back
// unchanged by replay, so every path in here is absolute.
struct Inputs {
  std::string command;
  std::vector<std::string> corpora;  // "<source>=<path>"
  std::vector<std::string> modes;
  std::string exemplars;
  std::string records;
  std::string pool;
  std::vector<std::string> noise;  // "<kind>:<seed>"
  std::string filter;
  std::size_t n = 0;
  int agent_turns = 2;
  int turn_budget = 8;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Inputs, command, corpora, modes, exemplars, records, pool, noise, filter, n,
                                   agent_turns, turn_budget)

const std::vector<std::string> kPathKeys = {
    "backend.mock_script", "run.cache_dir",   "corpora.snli_dev",  "corpora.snli_test", "corpora.anli_r1",
    "corpora.anli_r2",     "corpora.anli_r3", "corpora.custom",    "corpora.exemplars", "corpora.records",
    "corpora.pool",        "server.event_log",
};

std::string absolute(const std::string& path) {
  if (path.empty()) return path;
  return fs::absolute(path).lexically_normal().string();
}

Settings build_settings(const Common& c, const EnvLookup& env) {
  std::string config = c.config;
  if (config.empty())
    if (auto v = env("NLIDISC_CONFIG")) config = *v;
  Settings s = config.empty() ? Settings{} : Settings::from_ini(config);
  s.apply_env(env);
  for (const auto& kv : c.set) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(Errc::invalid_argument, "--set expects key=value, got '" + kv + "'");
    s.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.backend.empty()) s.set("backend.kind", c.backend);
  if (!c.mock_script.empty()) s.set("backend.mock_script", c.mock_script);
  if (!c.model.empty()) s.set("backend.model", c.model);
  if (!c.base_url.empty()) s.set("backend.base_url", c.base_url);
  if (!c.cache.empty()) s.set("run.cache_dir", c.cache);
  if (c.seed) s.set("run.seed", std::to_string(*c.seed));
  if (c.jobs) s.set("run.jobs", std::to_string(*c.jobs));
  if (c.temperature) s.set("sampling.temperature", json(*c.temperature).dump());
  if (c.samples) s.set("sampling.n_samples", std::to_string(*c.samples));
  for (const auto& key : kPathKeys)
    if (auto v = s.get(key); v && !v->empty()) s.set(key, absolute(*v));
  return s;
}

// Default: one worker per core, no more than the rate limit can feed.
std::size_t effective_jobs(const AppConfig& cfg) {
  std::size_t jobs = cfg.jobs;
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  if (cfg.backend.rate_limit > 0)
    jobs = std::min(jobs, static_cast<std::size_t>(std::max(1.0, std::ceil(cfg.backend.rate_limit))));
  return jobs;
}

SamplingParams sampling_for(const AppConfig& cfg) {
  SamplingParams p = cfg.sampling;
  // The mock is the only backend that honours a seed; tie it to the run seed
  // so different seeds give different mock runs.
  if (!p.seed && cfg.backend.kind == "mock") p.seed = cfg.seed;
  return p;
}

// "name=path", a configured corpus name, or a bare path (custom source).
std::string resolve_corpus(const std::string& spec, const AppConfig& cfg) {
  auto eq = spec.find('=');
  if (eq != std::string::npos) {
    const std::string name = spec.substr(0, eq);
    if (!source_from_string(name)) throw Error(Errc::invalid_argument, "unknown corpus source '" + name + "'");
    return name + "=" + absolute(spec.substr(eq + 1));
  }
  if (auto it = cfg.corpora.find(spec); it != cfg.corpora.end()) return spec + "=" + absolute(it->second);
  if (fs::exists(spec)) return "custom=" + absolute(spec);
  throw Error(Errc::config_error, "corpus '" + spec + "' is neither configured (corpora." + spec +
                                      ") nor an existing file");
}

std::vector<std::string> resolve_corpora(const std::vector<std::string>& specs, const AppConfig& cfg) {
  std::vector<std::string> out;
  if (specs.empty()) {
    for (const auto& [name, path] : cfg.corpora) out.push_back(name + "=" + absolute(path));
  } else {
    for (const auto& s : specs) out.push_back(resolve_corpus(s, cfg));
  }
  return out;
}

std::pair<Source, std::string> split_corpus(const std::string& resolved) {
  auto eq = resolved.find('=');
  return {*source_from_string(resolved.substr(0, eq)), resolved.substr(eq + 1)};
}

std::vector<NLIProblem> load_all(const std::vector<std::string>& corpora, std::ostream& err) {
  std::vector<NLIProblem> problems;
  for (const auto& c : corpora) {
    auto [source, path] = split_corpus(c);
    auto res = load_corpus(path, source);
    if (res.skipped_no_consensus || res.annotations_dropped)
      err << "nlidisc: " << path << ": skipped " << res.skipped_no_consensus << " without consensus, dropped "
          << res.annotations_dropped << " malformed annotator lists\n";
    problems.insert(problems.end(), std::make_move_iterator(res.problems.begin()),
                    std::make_move_iterator(res.problems.end()));
  }
  return problems;
}

std::vector<NLIProblem> select(std::vector<NLIProblem> problems, const std::string& filter, std::size_t n,
                               std::uint64_t seed) {
  if (filter == "three-of-five") {
    problems = filter_three_of_five(problems).kept;
  } else if (!filter.empty()) {
    throw Error(Errc::invalid_argument, "unknown filter '" + filter + "' (expected three-of-five)");
  }
  if (n > 0) problems = sample_problems(problems, n, seed);
  return problems;
}

std::vector<PromptMode> parse_modes(const std::vector<std::string>& names) {
  std::vector<PromptMode> modes;
  for (const auto& n : names) {
    auto m = mode_from_string(n);
    if (!m) throw Error(Errc::invalid_argument, "unknown mode '" + n + "'");
    modes.push_back(*m);
  }
  return modes;
}

std::vector<NoiseSpec> parse_noise(const std::vector<std::string>& specs) {
  std::vector<NoiseSpec> out;
  for (const auto& s : specs) {
    auto colon = s.find(':');
    auto kind = noise_kind_from_string(s.substr(0, colon));
    if (!kind) throw Error(Errc::invalid_argument, "unknown noise kind in '" + s + "'");
    NoiseSpec spec{*kind, 0};
    if (colon != std::string::npos) {
      try {
        spec.seed = std::stoull(s.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(Errc::invalid_argument, "bad noise seed in '" + s + "'");
      }
    }
    out.push_back(spec);
  }
  return out;
}

std::string need(const std::string& value, const std::string& what) {
  if (value.empty()) throw Error(Errc::config_error, what + " is required");
  return value;
}

// Fills defaults from config and makes every path absolute.
void complete_inputs(Inputs& in, const AppConfig& cfg) {
  in.corpora = resolve_corpora(in.corpora, cfg);
  if (in.exemplars.empty()) in.exemplars = cfg.exemplars;
  if (in.records.empty()) in.records = cfg.records;
  if (in.pool.empty()) in.pool = cfg.pool.empty() ? in.records : cfg.pool;
  in.exemplars = absolute(in.exemplars);
  in.records = absolute(in.records);
  in.pool = absolute(in.pool);
  if (in.modes.empty()) {
    if (in.command == "eval nli" || in.command == "eval generation" || in.command == "eval scenarios")
      in.modes = {"zero-shot", "few-shot", "few-shot-discussion"};
  }
  if (in.command == "eval ablation" && in.noise.empty())
    for (auto kind : {NoiseKind::random_discussion, NoiseKind::truncate_discussion, NoiseKind::random_label})
      in.noise.push_back(std::string(to_string(kind)) + ":" + std::to_string(cfg.seed));
  parse_modes(in.modes);
  parse_noise(in.noise);
}

std::map<std::string, std::string> input_digests(const Inputs& in, const AppConfig& cfg) {
  std::map<std::string, std::string> files;
  auto add = [&](const std::string& p) {
    if (!p.empty()) files[p] = sha256_hex(read_file(p));
  };
  for (const auto& c : in.corpora) add(split_corpus(c).second);
  add(in.exemplars);
  if (in.command == "eval generation") add(in.records);
  if (in.command == "eval ablation") add(in.pool);
  add(cfg.backend.mock_script);
  return files;
}

void write_report(RunDir& dir, const std::string& name, const EvalReport& report) {
  dir.write_output("reports/" + name + ".json", to_json(report).dump(2) + "\n");
  dir.write_output("reports/" + name + ".txt", render_table(report));
}

std::size_t count_failures(const json& details) {
  std::size_t n = 0;
  if (!details.contains("modes")) return 0;
  for (const auto& [mode, d] : details["modes"].items()) {
    for (const char* key : {"failures", "abstentions"}) {
      if (!d.contains(key)) continue;
      n += d[key].is_array() ? d[key].size() : d[key].get<std::size_t>();
    }
  }
  return n;
}

struct Outcome {
  std::size_t items = 0;
  std::size_t failures = 0;
};

Outcome execute(const Inputs& in, const AppConfig& cfg, std::shared_ptr<Backend> backend, RunDir& dir,
                const fs::path& cache_dir, std::ostream& err) {
  auto cache = std::make_shared<DiskCache>(cache_dir);
  auto sink = std::make_shared<DirectoryArtifactSink>(dir.artifacts());
  auto gateway = make_gateway(std::move(backend), cfg.backend, cache, sink);
  const std::string run_id = in.command;
  gateway->begin_run(run_id);

  EvalContext ctx{*gateway, sampling_for(cfg), cfg.prompts, effective_jobs(cfg), run_id, cfg.seed};
  const auto modes = parse_modes(in.modes);
  auto problems = load_all(in.corpora, err);
  std::vector<Exemplar> exemplars;
  if (!in.exemplars.empty()) exemplars = load_exemplars(in.exemplars);
  auto needs_exemplars = [&](std::span<const PromptMode> ms) {
    for (auto m : ms)
      if (m != PromptMode::zero_shot && exemplars.empty())
        throw Error(Errc::config_error, "mode " + std::string(to_string(m)) + " needs --exemplars");
  };

  Outcome outcome;
  if (in.command == "eval nli") {
    needs_exemplars(modes);
    problems = select(std::move(problems), in.filter, in.n, cfg.seed);
    auto report = eval_nli(problems, modes, exemplars, ctx);
    write_report(dir, "nli-accuracy", report);
    outcome = {problems.size() * modes.size(), count_failures(report.details)};
  } else if (in.command == "eval generation") {
    needs_exemplars(modes);
    auto records = load_records(need(in.records, "--records"));
    auto index = index_problems(problems);
    auto provider = make_embedding_provider(cfg.embedding);
    auto report = eval_generation(records, index, modes, exemplars, *provider, ctx);
    write_report(dir, "generation", report);
    outcome = {report.metadata.value("items", std::size_t{0}) * modes.size(), count_failures(report.details)};
  } else if (in.command == "eval scenarios") {
    needs_exemplars(modes);
    problems = select(std::move(problems), in.filter, in.n, cfg.seed);
    TemplateAgent agent(in.agent_turns);
    auto run = eval_scenarios(problems, modes, exemplars, agent, ctx, in.turn_budget);
    write_report(dir, "scenario-rates", run.rates);
    write_report(dir, "before-after", run.before_after);
    outcome = {problems.size() * modes.size(), count_failures(run.rates.details)};
  } else if (in.command == "eval ablation") {
    needs_exemplars(std::array{PromptMode::few_shot_discussion});
    problems = select(std::move(problems), in.filter, in.n, cfg.seed);
    std::vector<DiscussionRecord> pool;
    if (!in.pool.empty()) pool = load_records(in.pool);
    const auto specs = parse_noise(in.noise);
    auto report = eval_ablation(problems, exemplars, specs, pool, ctx);
    write_report(dir, "ablation", report);
    std::size_t abstained = 0;
    for (const auto& p : report.details.value("clean_predictions", json::array()))
      if (p.value("predicted", json()).is_null()) ++abstained;
    outcome = {problems.size() * (specs.size() + 1), abstained};
  } else if (in.command == "pseudogen") {
    problems = select(std::move(problems), in.filter, in.n, cfg.seed);
    auto batch = generate_batch(problems, sampling_for(cfg), *gateway,
                                PseudoOptions{cfg.seed, "", ctx.jobs, run_id});
    fs::create_directories(dir.root() / "pseudo");
    std::string lines;
    for (const auto& r : batch.records) lines += serialize_record(r) + "\n";
    dir.write_output("pseudo/records.jsonl", lines);
    lines.clear();
    for (const auto& r : batch.rejects) lines += json{{"problem_id", r.problem_id}, {"reason", r.reason}}.dump() + "\n";
    dir.write_output("pseudo/rejects.jsonl", lines);
    export_finetune(batch.records, index_problems(problems), dir.root() / "pseudo" / "finetune.jsonl");
    dir.register_output("pseudo/finetune.jsonl");
    dir.register_output("pseudo/finetune.meta.json");
    json stats = {{"requested", batch.stats.requested},
                  {"accepted", batch.stats.accepted},
                  {"rejected", batch.stats.rejected},
                  {"mean_utterances", batch.stats.mean_utterances ? json(*batch.stats.mean_utterances) : json()},
                  {"reject_rate", batch.stats.reject_rate},
                  {"warnings", batch.warnings}};
    dir.write_output("reports/pseudogen.json", stats.dump(2) + "\n");
    outcome = {problems.size(), batch.rejects.size()};
  } else {
    throw Error(Errc::invalid_argument, "unknown command '" + in.command + "'");
  }

  const auto usage = gateway->record_usage(run_id);
  for (const auto& [id, u] : usage.per_backend)
    err << "nlidisc: backend " << id << ": " << u.requests << " requests, " << u.cache_hits << " cache hits, "
        << u.failures << " failures\n";
  return outcome;
}

json make_manifest(const Inputs& in, const Settings& settings, const AppConfig& cfg, const std::string& backend_id,
                   const fs::path& cache_dir, const RunDir& dir) {
  Sha256 prompts;
  prompts.update_field(cfg.prompts.task_description).update_field(cfg.prompts.finalize_cue);
  return {{"format", "nlidisc-run-v1"},
          {"command", in.command},
          {"inputs", in},
          {"settings", settings.values()},
          {"backend", backend_id},
          {"seed", cfg.seed},
          {"cache_dir", cache_dir == dir.cache() ? std::string("cache") : absolute(cache_dir.string())},
          {"fingerprints", {{"prompt_config", prompts.hex_digest()}, {"files", input_digests(in, cfg)}}},
          {"outputs", dir.outputs()}};
}

void print_outputs(const RunDir& dir, std::ostream& out) {
  for (const auto& [rel, sha] : dir.outputs()) out << (dir.root() / rel).string() << "\n";
  out << dir.manifest().string() << "\n";
}

fs::path cache_dir_for(const AppConfig& cfg, const RunDir& dir) {
  return cfg.cache_dir.empty() ? dir.cache() : fs::path(cfg.cache_dir);
}

int replay(const fs::path& src, fs::path into, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = src / "manifest.json";
  if (!fs::exists(manifest_path)) throw Error(Errc::file_not_found, manifest_path.string());
  json m;
  try {
    m = json::parse(read_file(manifest_path.string()));
  } catch (const json::exception& e) {
    throw Error(Errc::schema_error, manifest_path.string() + ": " + e.what());
  }
  if (m.value("format", "") != "nlidisc-run-v1") throw Error(Errc::schema_error, "not a run manifest");
  if (into.empty()) into = src / "replay";
  if (fs::weakly_canonical(into) == fs::weakly_canonical(src))
    throw Error(Errc::invalid_argument, "replay output must differ from the recorded run");

  Inputs in = m.at("inputs").get<Inputs>();
  Settings settings;
  for (const auto& [k, v] : m.at("settings").items()) settings.set(k, v.get<std::string>());
  const AppConfig cfg = resolve_config(settings);

  const auto recorded = m.at("fingerprints").at("files").get<std::map<std::string, std::string>>();
  const auto now = input_digests(in, cfg);
  for (const auto& [path, sha] : recorded) {
    auto it = now.find(path);
    if (it == now.end() || it->second != sha)
      throw Error(Errc::invariant_violation, "input changed since the recorded run: " + path);
  }

  RunDir dir(into);
  fs::path cache_dir = m.at("cache_dir").get<std::string>();
  if (cache_dir.is_relative()) cache_dir = src / cache_dir;
  auto backend = std::make_shared<OfflineBackend>(m.at("backend").get<std::string>());
  execute(in, cfg, backend, dir, cache_dir, err);
  write_atomic(dir.manifest(), make_manifest(in, settings, cfg, backend->id(), cache_dir, dir).dump(2) + "\n");

  const auto expected = m.at("outputs").get<std::map<std::string, std::string>>();
  json differences = json::array();
  for (const auto& [rel, sha] : expected) {
    const fs::path a = src / rel, b = into / rel;
    if (!fs::exists(a) || !fs::exists(b) || read_file(a.string()) != read_file(b.string())) differences.push_back(rel);
  }
  for (const auto& [rel, sha] : dir.outputs())
    if (!expected.count(rel)) differences.push_back(rel);
  out << json{{"replayed", expected.size()}, {"into", into.string()}, {"differences", differences}}.dump() << "\n";
  return differences.empty() ? exit_ok : exit_replay_diff;
}

int run_experiment(Inputs in, const Common& common, const std::string& out_dir, bool verify, bool strict,
                   std::ostream& out, std::ostream& err, const EnvLookup& env) {
  const Settings settings = build_settings(common, env);
  const AppConfig cfg = resolve_config(settings);
  complete_inputs(in, cfg);
  RunDir dir(need(out_dir, "--out"));
  const fs::path cache_dir = cache_dir_for(cfg, dir);
  auto backend = make_backend(cfg.backend, env);
  const std::string backend_id = backend->id();

  const Outcome outcome = execute(in, cfg, std::move(backend), dir, cache_dir, err);
  write_atomic(dir.manifest(), make_manifest(in, settings, cfg, backend_id, cache_dir, dir).dump(2) + "\n");
  print_outputs(dir, out);
  err << "nlidisc: " << in.command << ": " << outcome.items << " items, " << outcome.failures << " failed\n";

  if (verify) {
    const int rc = replay(dir.root(), dir.root() / "verify", out, err);
    if (rc != exit_ok) return rc;
  }
  return strict && outcome.failures > 0 ? exit_partial : exit_ok;
}

int corpus_sample(Inputs in, const Common& common, const std::string& output, std::ostream& out, std::ostream& err,
                  const EnvLookup& env) {
  const AppConfig cfg = resolve_config(build_settings(common, env));
  in.corpora = resolve_corpora(in.corpora, cfg);
  auto all = load_all(in.corpora, err);
  const std::size_t loaded = all.size();
  auto picked = select(std::move(all), in.filter, in.n, cfg.seed);
  if (output.empty() || output == "-") {
    write_corpus(out, picked);
  } else {
    write_corpus(fs::path(output), picked);
  }
  err << "nlidisc: sampled " << picked.size() << " of " << loaded << " problems\n";
  return exit_ok;
}

int corpus_stats_cmd(Inputs in, const Common& common, std::ostream& out, const EnvLookup& env) {
  const AppConfig cfg = resolve_config(build_settings(common, env));
  in.corpora = resolve_corpora(in.corpora, cfg);
  if (in.records.empty()) in.records = cfg.records;

  json corpora = json::array();
  std::map<std::string, Split> split_of;
  for (const auto& c : in.corpora) {
    auto [source, path] = split_corpus(c);
    auto res = load_corpus(path, source);
    std::vector<Label> golds;
    std::size_t annotated = 0;
    for (const auto& p : res.problems) {
      golds.push_back(p.gold_label);
      if (p.annotator_labels) ++annotated;
      if (p.split) split_of[p.id] = *p.split;
    }
    auto dist = tally(golds);
    json labels = json::object();
    for (auto l : {Label::entailment, Label::contradiction, Label::neutral})
      labels[std::string(to_string(l))] = dist.count(l);
    corpora.push_back({{"source", to_string(source)},
                       {"path", path},
                       {"problems", res.problems.size()},
                       {"labels", labels},
                       {"with_annotations", annotated},
                       {"three_of_five", filter_three_of_five(res.problems).kept.size()},
                       {"skipped_no_consensus", res.skipped_no_consensus},
                       {"annotations_dropped", res.annotations_dropped}});
  }
  json result = {{"corpora", corpora}};
  if (!in.records.empty()) result["records"] = to_json(corpus_stats(load_records(in.records), split_of));
  out << result.dump(2) << "\n";
  return exit_ok;
}

int score_cmd(const Common& common, const std::string& candidate, const std::string& reference,
              const std::string& pairs, std::ostream& out, const EnvLookup& env) {
  const AppConfig cfg = resolve_config(build_settings(common, env));
  auto provider = make_embedding_provider(cfg.embedding, env);
  auto emit = [&](const std::string& c, const std::string& r) {
    auto e = provider->embed({c, r});
    auto s = greedy_match_score(e[0], e[1]);
    out << json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}.dump() << "\n";
  };
  if (!pairs.empty()) {
    std::ifstream in(pairs);
    if (!in) throw Error(Errc::file_not_found, pairs);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        auto j = json::parse(line);
        emit(j.at("candidate").get<std::string>(), j.at("reference").get<std::string>());
      } catch (const json::exception& e) {
        throw Error(Errc::malformed_line, pairs + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return exit_ok;
  }
  if (candidate.empty() || reference.empty())
    throw Error(Errc::invalid_argument, "score needs --candidate and --reference, or --pairs");
  emit(candidate, reference);
  return exit_ok;
}

struct ServeFlags {
  std::string host;
  std::optional<int> port;
  std::string event_log;
  std::string out;
  bool dry_run = false;
};

int serve_cmd(Inputs in, const Common& common, const ServeFlags& flags, std::ostream& out, std::ostream& err,
              const EnvLookup& env) {
  const AppConfig cfg = resolve_config(build_settings(common, env));
  in.corpora = resolve_corpora(in.corpora, cfg);
  ServiceOptions opts;
  opts.problems = load_all(in.corpora, err);
  const std::string exemplars = in.exemplars.empty() ? cfg.exemplars : in.exemplars;
  if (!exemplars.empty()) opts.exemplars = load_exemplars(exemplars);
  opts.params = sampling_for(cfg);
  opts.prompts = cfg.prompts;
  const std::string log = flags.event_log.empty() ? cfg.server.event_log : flags.event_log;
  if (!log.empty()) opts.event_log = log;
  opts.cors_origin = cfg.server.cors_origin;
  if (!cfg.server.token_env.empty()) {
    auto token = env(cfg.server.token_env);
    if (!token || token->empty())
      throw Error(Errc::config_error, "server.token_env names " + cfg.server.token_env + ", which is not set");
    opts.bearer_token = *token;
  }
  opts.seed = cfg.seed;

  std::shared_ptr<CompletionCache> cache;
  if (!cfg.cache_dir.empty()) cache = std::make_shared<DiskCache>(cfg.cache_dir);
  std::shared_ptr<ArtifactSink> sink;
  if (!flags.out.empty()) sink = std::make_shared<DirectoryArtifactSink>(fs::path(flags.out) / "artifacts");
  std::shared_ptr<Gateway> gateway = make_gateway(make_backend(cfg.backend, env), cfg.backend, cache, sink);

  ApiService service(gateway, std::move(opts));
  const std::string host = flags.host.empty() ? cfg.server.host : flags.host;
  const int port = service.bind(host, flags.port.value_or(cfg.server.port));
  out << "listening on http://" << host << ":" << port << " (" << service.session_count() << " sessions restored)"
      << std::endl;
  if (flags.dry_run) return exit_ok;
  service.listen();
  return exit_ok;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "INI config file (default: $NLIDISC_CONFIG)");
  app->add_option("--backend", c.backend, "mock | http");
  app->add_option("--mock-script", c.mock_script, "JSONL rules for the mock backend");
  app->add_option("--model", c.model, "Model name for the http backend");
  app->add_option("--base-url", c.base_url, "Base URL for the http backend");
  app->add_option("--cache", c.cache, "Completion cache directory (default: OUT/cache)");
  app->add_option("--seed", c.seed, "Run seed");
  app->add_option("--jobs", c.jobs, "Worker threads (default: cores, capped by the rate limit)");
  app->add_option("--temperature", c.temperature, "Sampling temperature");
  app->add_option("--samples", c.samples, "Completions per generation item");
  app->add_option("--set", c.set, "Any config key, as section.key=value")->take_all();
}

void add_selection(CLI::App* app, Inputs& in) {
  app->add_option("--corpus", in.corpora, "source=path, a configured corpus name, or a path")->take_all();
  app->add_option("--filter", in.filter, "three-of-five");
  app->add_option("--n", in.n, "Seeded sample size (0 = all)");
}

void print_error(std::ostream& err, const std::string& code, const std::string& message) {
  err << json{{"error", {{"code", code}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"NLI human-system discussion workbench", "nlidisc"};
  app.require_subcommand(1);

  Common common;
  Inputs in;
  std::string out_dir, output, candidate, reference, pairs, replay_into;
  bool verify = false, strict = false;
  ServeFlags serve;

  auto* corpus = app.add_subcommand("corpus", "Inspect and sample corpora")->require_subcommand(1);
  auto* sample = corpus->add_subcommand("sample", "Filter and sample problems as JSONL");
  add_common(sample, common);
  add_selection(sample, in);
  sample->add_option("--output,-o", output, "Output file (default: stdout)");
  auto* stats = corpus->add_subcommand("stats", "Label and annotation counts, transcript statistics");
  add_common(stats, common);
  stats->add_option("--corpus", in.corpora, "Corpora to describe")->take_all();
  stats->add_option("--records", in.records, "Discussion records JSONL");

  auto* eval = app.add_subcommand("eval", "Run an experiment")->require_subcommand(1);
  std::map<CLI::App*, std::string> experiments;
  for (const char* name : {"nli", "generation", "scenarios", "ablation"}) {
    auto* sc = eval->add_subcommand(name);
    experiments[sc] = std::string("eval ") + name;
  }
  eval->get_subcommand("nli")->description("Label accuracy per corpus and prompting mode");
  eval->get_subcommand("generation")->description("Similarity of continuations to human utterances");
  eval->get_subcommand("scenarios")->description("Acceptance and objection scenarios with a scripted human");
  eval->get_subcommand("ablation")->description("Accuracy deltas under noisy exemplars");
  auto* pseudogen = app.add_subcommand("pseudogen", "Generate pseudo discussions and a fine-tuning export");
  experiments[pseudogen] = "pseudogen";

  for (auto& [sc, name] : experiments) {
    add_common(sc, common);
    add_selection(sc, in);
    sc->add_option("--out", out_dir, "Output directory")->required();
    sc->add_flag("--verify", verify, "Replay offline right away and compare reports");
    sc->add_flag("--strict", strict, "Exit 3 when any item failed");
    if (name == "pseudogen") continue;
    sc->add_option("--exemplars", in.exemplars, "Exemplar JSONL");
    if (name != "eval ablation") sc->add_option("--mode", in.modes, "Prompting mode (repeatable)")->take_all();
  }
  eval->get_subcommand("generation")->add_option("--records", in.records, "Tagged discussion records JSONL");
  auto* scenarios = eval->get_subcommand("scenarios");
  scenarios->add_option("--agent-turns", in.agent_turns, "Utterances the scripted human makes");
  scenarios->add_option("--turn-budget", in.turn_budget, "Turn cap per session");
  auto* ablation = eval->get_subcommand("ablation");
  ablation->add_option("--noise", in.noise, "kind[:seed], repeatable (default: every kind)")->take_all();
  ablation->add_option("--pool", in.pool, "Records drawn from by random-discussion");

  auto* score = app.add_subcommand("score", "Greedy embedding match between two texts");
  add_common(score, common);
  score->add_option("--candidate", candidate);
  score->add_option("--reference", reference);
  score->add_option("--pairs", pairs, "JSONL of {candidate, reference}");

  auto* serve_app = app.add_subcommand("serve", "HTTP API for live sessions");
  add_common(serve_app, common);
  serve_app->add_option("--corpus", in.corpora, "Problems to serve")->take_all();
  serve_app->add_option("--exemplars", in.exemplars);
  serve_app->add_option("--host", serve.host);
  serve_app->add_option("--port", serve.port);
  serve_app->add_option("--event-log", serve.event_log, "Append-only session log, replayed on start");
  serve_app->add_option("--out", serve.out, "Write the raw artifact log under OUT/artifacts");
  serve_app->add_flag("--dry-run", serve.dry_run, "Bind, report the port and exit");

  auto* replay_app = app.add_subcommand("replay", "Regenerate a run offline from its cache and compare");
  replay_app->add_option("--out", out_dir, "Directory of the recorded run")->required();
  replay_app->add_option("--into", replay_into, "Where to write (default: OUT/replay)");

  std::vector<std::string> argv_store{"nlidisc"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
  }

  try {
    for (auto& [sc, name] : experiments) {
      if (!sc->parsed()) continue;
      in.command = name;
      return run_experiment(in, common, out_dir, verify, strict, out, err, env);
    }
    if (sample->parsed()) return corpus_sample(in, common, output, out, err, env);
    if (stats->parsed()) return corpus_stats_cmd(in, common, out, env);
    if (score->parsed()) return score_cmd(common, candidate, reference, pairs, out, env);
    if (serve_app->parsed()) return serve_cmd(in, common, serve, out, err, env);
    if (replay_app->parsed()) return replay(out_dir, replay_into, out, err);
  } catch (const Error& e) {
    print_error(err, std::string(errc_name(e.code())), e.what());
    return exit_failure;
  } catch (const std::exception& e) {
    print_error(err, "Internal", e.what());
    return exit_failure;
  }
  return exit_usage;
}

}  // namespace nlidisc::cli
