#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlidisc/prompting.hpp"
#include "nlidisc/transcript.hpp"

namespace nlidisc {

enum class NoiseKind { random_discussion, truncate_discussion, random_label };
std::string_view to_string(NoiseKind kind) noexcept;
std::optional<NoiseKind> noise_kind_from_string(std::string_view text) noexcept;
/// Row label in ablation tables: "Random dis.", "Cutting dis.", "Random label".
std::string_view table_row_name(NoiseKind kind) noexcept;

struct NoiseSpec {
  NoiseKind kind = NoiseKind::random_label;
  std::uint64_t seed = 0;
};

struct NoiseResult {
  std::vector<Exemplar> exemplars;
  /// One line per exemplar describing what changed or why it was skipped.
  std::vector<std::string> log;
};

/// Perturbs exemplars only; target problems are never touched.
///  - random_discussion: each discussion is replaced by a seeded draw from
///    `pool`, excluding records about the exemplar's own problem. Throws
///    EmptyPool when nothing is eligible.
///  - truncate_discussion: each discussion keeps its first k utterances,
///    k uniform in [1, len - 1]. Single-utterance discussions are skipped.
///  - random_label: each gold label is redrawn uniformly from all three.
NoiseResult apply_noise(std::span<const Exemplar> exemplars, const NoiseSpec& spec,
                        std::span<const DiscussionRecord> pool = {});

}  // namespace nlidisc
