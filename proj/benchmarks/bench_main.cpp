#include <benchmark/benchmark.h>

#include <vector>

#include "nlidisc/corpus.hpp"
#include "nlidisc/embeddings.hpp"
#include "nlidisc/metrics.hpp"
#include "nlidisc/prompting.hpp"
#include "nlidisc/rng.hpp"
#include "nlidisc/stats.hpp"

using namespace nlidisc;

namespace {

TokenEmbeddings random_tokens(Rng& rng, std::size_t len, std::size_t dim) {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;
  for (std::size_t i = 0; i < len; ++i) {
    tokens.push_back("t" + std::to_string(i));
    std::vector<double> v(dim);
    for (double& x : v) x = rng.unit() * 2.0 - 1.0 + 1e-9;
    vectors.push_back(std::move(v));
  }
  return TokenEmbeddings::normalized(std::move(tokens), std::move(vectors));
}

NLIProblem problem(int i, Label gold) {
  return {"p" + std::to_string(i), "A man in a red jacket walks his dog along the beach at sunset.",
          "Someone is outdoors with an animal.", gold, std::nullopt, Source::snli_dev, std::nullopt};
}

std::vector<Exemplar> exemplars(std::size_t n) {
  std::vector<Exemplar> out;
  for (std::size_t i = 0; i < n; ++i) {
    Exemplar ex{problem(static_cast<int>(i), kAllLabels[i % 3]), std::nullopt};
    DiscussionRecord d;
    d.problem_id = ex.problem.id;
    d.participant_labels = {{Speaker::human1, kAllLabels[i % 3]}, {Speaker::human2, kAllLabels[(i + 1) % 3]}};
    d.final_label = kAllLabels[i % 3];
    for (std::size_t k = 0; k < 5; ++k)
      d.utterances.push_back({k, k % 2 ? Speaker::human2 : Speaker::human1,
                              "I think the scene described supports this reading, for the reasons given.", std::nullopt});
    ex.discussion = d;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

static void BM_GreedyMatch(benchmark::State& state) {
  Rng rng(1);
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto a = random_tokens(rng, len, 768);
  const auto b = random_tokens(rng, len, 768);
  for (auto _ : state) benchmark::DoNotOptimize(greedy_match_score(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GreedyMatch)->RangeMultiplier(2)->Range(8, 128)->Complexity(benchmark::oNSquared);

static void BM_HashEmbedding(benchmark::State& state) {
  HashEmbeddingProvider provider(64, 0);
  const std::vector<std::string> texts(16, "The premise never says what they talk about, so it is neutral.");
  for (auto _ : state) benchmark::DoNotOptimize(provider.embed(texts));
}
BENCHMARK(BM_HashEmbedding);

static void BM_RenderTaskPrompt(benchmark::State& state) {
  const auto ex = exemplars(static_cast<std::size_t>(state.range(0)));
  const auto target = problem(99, Label::neutral);
  for (auto _ : state) benchmark::DoNotOptimize(render_task_prompt(PromptMode::few_shot_discussion, ex, target));
}
BENCHMARK(BM_RenderTaskPrompt)->Arg(3)->Arg(10);

static void BM_WelchT(benchmark::State& state) {
  Rng rng(2);
  std::vector<double> xs(static_cast<std::size_t>(state.range(0))), ys(xs.size());
  for (double& x : xs) x = rng.unit();
  for (double& y : ys) y = rng.unit() + 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(welch_t_test(xs, ys));
}
BENCHMARK(BM_WelchT)->Arg(10)->Arg(1000);

static void BM_McNemar(benchmark::State& state) {
  const auto b = static_cast<std::uint64_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mcnemar_test(b, b / 3));
}
BENCHMARK(BM_McNemar)->Arg(12)->Arg(400);

static void BM_ThreeOfFive(benchmark::State& state) {
  Rng rng(3);
  std::vector<NLIProblem> corpus;
  for (int i = 0; i < 10000; ++i) {
    auto p = problem(i, Label::neutral);
    std::vector<Label> labels;
    for (int k = 0; k < 5; ++k) labels.push_back(kAllLabels[rng.below(3)]);
    p.annotator_labels = labels;
    corpus.push_back(std::move(p));
  }
  for (auto _ : state) benchmark::DoNotOptimize(filter_three_of_five(corpus));
}
BENCHMARK(BM_ThreeOfFive);

BENCHMARK_MAIN();
