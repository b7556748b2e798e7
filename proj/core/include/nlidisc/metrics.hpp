#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlidisc/labels.hpp"

namespace nlidisc {

/// Tokens of one text and a unit vector per token.
struct TokenEmbeddings {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> vectors;

  /// Normalizes every vector to unit length. Throws EmptySequence,
  /// DimensionMismatch (ragged vectors or |tokens| != |vectors|) and
  /// InvalidArgument (zero vector).
  static TokenEmbeddings normalized(std::vector<std::string> tokens, std::vector<std::vector<double>> vectors);

  std::size_t size() const noexcept { return vectors.size(); }
  std::size_t dim() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }
  bool empty() const noexcept { return vectors.empty(); }
};

struct ScoreTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2PR/(P+R), or 0 when P+R is not positive (possible without clamping).
double f1_of(double precision, double recall) noexcept;

struct ScoreOptions {
  /// Clamp cosines to [0, 1] before averaging.
  bool clamp = true;
};

/// Greedy cosine matching: precision averages, over candidate tokens, the
/// best cosine against any reference token; recall does the same from the
/// reference side. No IDF weighting, no baseline rescaling.
/// Throws EmptySequence or DimensionMismatch.
ScoreTriple greedy_match_score(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
                               ScoreOptions options = {});

struct TagAggregate {
  double supportive_mean_f1 = 0.0;
  double unsupportive_mean_f1 = 0.0;
  /// supportive - unsupportive
  double diff = 0.0;
  std::size_t supportive_count = 0;
  std::size_t unsupportive_count = 0;
};

/// Mean F1 per tag. Throws EmptyGroup when a tag has no items and
/// InvalidArgument for irrelevant items.
TagAggregate aggregate_scores(std::span<const std::pair<ContributionTag, ScoreTriple>> per_item);

}  // namespace nlidisc
