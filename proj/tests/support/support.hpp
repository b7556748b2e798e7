#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlidisc/backends.hpp"
#include "nlidisc/corpus.hpp"
#include "nlidisc/prompting.hpp"
#include "nlidisc/transcript.hpp"

namespace nlidisc::testing {

std::filesystem::path fixture(const std::string& relative);

/// Unique directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// The four fixture corpora (SNLI dev, ANLI R1-R3), in that order.
std::vector<NLIProblem> fixture_problems();
std::vector<Exemplar> fixture_exemplars();
std::vector<DiscussionRecord> fixture_records();

/// `n` custom problems with five annotator labels each. Majority counts
/// cycle through 2..5 so roughly a quarter have a majority of exactly 3.
std::vector<NLIProblem> synthetic_corpus(std::size_t n, std::uint64_t seed);

/// Premise and hypothesis of the last problem in a prompt, accepting both
/// the newline layout of task prompts and the single-line continuation body.
struct Target {
  std::string premise;
  std::string hypothesis;
};
std::optional<Target> target_of(const std::string& prompt);

enum class FinalPolicy {
  /// Final label is always gold.
  oracle,
  /// Final label is whatever the human argued in the first turn.
  capitulating,
  /// Final label repeats the initial prediction.
  stubborn,
};

struct NliMockOptions {
  FinalPolicy policy = FinalPolicy::oracle;
  /// Initial (task) prediction; defaults to gold.
  std::function<Label(const NLIProblem&)> initial;
  std::string id = "nli-mock";
};

/// Backend answering task and finalize prompts about `problems` according to
/// `options`; session turns get a fixed reply. Unknown problems answer
/// "I am not sure."
std::shared_ptr<FunctionBackend> nli_mock(std::span<const NLIProblem> problems, NliMockOptions options = {});

/// Gold for problems whose id hashes even, a fixed wrong label otherwise.
Label half_right(const NLIProblem& problem);
/// A wrong label for the problem, the same on every call.
Label wrong_label(const NLIProblem& problem);

/// Continuation backend that answers every prompt of `records` with the
/// human reference utterance. With `supportive_only`, unsupportive targets
/// get an unrelated sentence instead.
std::shared_ptr<FunctionBackend> echo_backend(std::span<const DiscussionRecord> records,
                                              std::span<const NLIProblem> problems, bool supportive_only = false);

}  // namespace nlidisc::testing
