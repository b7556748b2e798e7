#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nlidisc {

/// Failure categories raised across the library. Callers branch on code(),
/// the message carries context for humans.
enum class Errc {
  file_not_found,
  malformed_line,
  unknown_label,
  duplicate_id,
  empty_input,
  insufficient_problems,
  schema_error,
  invariant_violation,
  index_out_of_range,
  missing_discussion,
  mode_mismatch,
  equal_labels,
  final_not_held,
  empty_utterance,
  empty_history,
  backend_unavailable,
  transient_backend,
  auth_error,
  budget_exceeded,
  cache_miss,
  no_label_found,
  ambiguous_label,
  unknown_run,
  session_finalized,
  invalid_phase,
  unknown_session,
  empty_sequence,
  dimension_mismatch,
  insufficient_samples,
  degenerate_variance,
  empty_group,
  untagged_utterance,
  empty_pool,
  no_markers,
  fewer_than_two_utterances,
  io_error,
  config_error,
  invalid_argument,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace nlidisc
