#include "nlidisc/noise.hpp"

#include "nlidisc/error.hpp"
#include "nlidisc/rng.hpp"

namespace nlidisc {

std::string_view to_string(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::random_discussion: return "random-discussion";
    case NoiseKind::truncate_discussion: return "truncate-discussion";
    case NoiseKind::random_label: return "random-label";
  }
  return "";
}

std::optional<NoiseKind> noise_kind_from_string(std::string_view text) noexcept {
  for (auto k : {NoiseKind::random_discussion, NoiseKind::truncate_discussion, NoiseKind::random_label})
    if (to_string(k) == text) return k;
  return std::nullopt;
}

std::string_view table_row_name(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::random_discussion: return "Random dis.";
    case NoiseKind::truncate_discussion: return "Cutting dis.";
    case NoiseKind::random_label: return "Random label";
  }
  return "";
}

NoiseResult apply_noise(std::span<const Exemplar> exemplars, const NoiseSpec& spec,
                        std::span<const DiscussionRecord> pool) {
  NoiseResult out;
  out.exemplars.assign(exemplars.begin(), exemplars.end());
  for (std::size_t i = 0; i < out.exemplars.size(); ++i) {
    Exemplar& ex = out.exemplars[i];
    // One stream per exemplar so adding exemplars never shifts earlier draws.
    Rng rng(derive_seed(spec.seed, i));
    const std::string& id = ex.problem.id;
    switch (spec.kind) {
      case NoiseKind::random_discussion: {
        std::vector<std::size_t> eligible;
        for (std::size_t k = 0; k < pool.size(); ++k)
          if (pool[k].problem_id != id) eligible.push_back(k);
        if (eligible.empty()) throw Error(Errc::empty_pool, "no pool discussion for exemplar '" + id + "'");
        const auto& pick = pool[eligible[rng.below(eligible.size())]];
        ex.discussion = pick;
        out.log.push_back(id + ": discussion replaced by " + pick.problem_id);
        break;
      }
      case NoiseKind::truncate_discussion: {
        if (!ex.discussion) {
          out.log.push_back(id + ": skipped, no discussion");
          break;
        }
        auto& utts = ex.discussion->utterances;
        if (utts.size() < 2) {
          out.log.push_back(id + ": skipped, single-utterance discussion");
          break;
        }
        const auto k = static_cast<std::size_t>(rng.between(1, utts.size() - 1));
        out.log.push_back(id + ": cut to " + std::to_string(k) + " of " + std::to_string(utts.size()) + " utterances");
        utts.resize(k);
        break;
      }
      case NoiseKind::random_label: {
        const Label before = ex.problem.gold_label;
        ex.problem.gold_label = kAllLabels[rng.below(kAllLabels.size())];
        out.log.push_back(id + ": label " + std::string(to_string(before)) + " -> " +
                          std::string(to_string(ex.problem.gold_label)));
        break;
      }
    }
  }
  return out;
}

}  // namespace nlidisc
