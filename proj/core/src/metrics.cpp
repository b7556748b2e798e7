#include "nlidisc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nlidisc/error.hpp"

namespace nlidisc {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TokenEmbeddings TokenEmbeddings::normalized(std::vector<std::string> tokens,
                                            std::vector<std::vector<double>> vectors) {
  if (vectors.empty()) throw Error(Errc::empty_sequence, "no token vectors");
  if (tokens.size() != vectors.size())
    throw Error(Errc::dimension_mismatch, std::to_string(tokens.size()) + " tokens but " +
                                              std::to_string(vectors.size()) + " vectors");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw Error(Errc::dimension_mismatch, "zero-dimensional vectors");
  for (auto& v : vectors) {
    if (v.size() != dim) throw Error(Errc::dimension_mismatch, "ragged token vectors");
    const double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(Errc::invalid_argument, "cannot normalize a zero vector");
    for (double& x : v) x /= norm;
  }
  return TokenEmbeddings{std::move(tokens), std::move(vectors)};
}

double f1_of(double precision, double recall) noexcept {
  const double sum = precision + recall;
  return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

ScoreTriple greedy_match_score(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
                               ScoreOptions options) {
  if (candidate.empty() || reference.empty()) throw Error(Errc::empty_sequence, "cannot score an empty sequence");
  if (candidate.dim() != reference.dim())
    throw Error(Errc::dimension_mismatch, "candidate dim " + std::to_string(candidate.dim()) + " vs reference dim " +
                                              std::to_string(reference.dim()));

  const std::size_t nc = candidate.size();
  const std::size_t nr = reference.size();
  std::vector<double> best_for_candidate(nc, -std::numeric_limits<double>::infinity());
  std::vector<double> best_for_reference(nr, -std::numeric_limits<double>::infinity());
  // One pass over the similarity matrix fills both row and column maxima.
  for (std::size_t i = 0; i < nc; ++i) {
    for (std::size_t j = 0; j < nr; ++j) {
      double sim = dot(candidate.vectors[i], reference.vectors[j]);
      if (options.clamp) sim = std::clamp(sim, 0.0, 1.0);
      best_for_candidate[i] = std::max(best_for_candidate[i], sim);
      best_for_reference[j] = std::max(best_for_reference[j], sim);
    }
  }
  ScoreTriple s;
  for (double v : best_for_candidate) s.precision += v;
  for (double v : best_for_reference) s.recall += v;
  s.precision /= static_cast<double>(nc);
  s.recall /= static_cast<double>(nr);
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

TagAggregate aggregate_scores(std::span<const std::pair<ContributionTag, ScoreTriple>> per_item) {
  TagAggregate agg;
  double sup = 0.0;
  double unsup = 0.0;
  for (const auto& [tag, score] : per_item) {
    switch (tag) {
      case ContributionTag::supportive:
        sup += score.f1;
        ++agg.supportive_count;
        break;
      case ContributionTag::unsupportive:
        unsup += score.f1;
        ++agg.unsupportive_count;
        break;
      case ContributionTag::irrelevant:
        throw Error(Errc::invalid_argument, "irrelevant utterances are not aggregated");
    }
  }
  if (agg.supportive_count == 0) throw Error(Errc::empty_group, "supportive");
  if (agg.unsupportive_count == 0) throw Error(Errc::empty_group, "unsupportive");
  agg.supportive_mean_f1 = sup / static_cast<double>(agg.supportive_count);
  agg.unsupportive_mean_f1 = unsup / static_cast<double>(agg.unsupportive_count);
  agg.diff = agg.supportive_mean_f1 - agg.unsupportive_mean_f1;
  return agg;
}

}  // namespace nlidisc
