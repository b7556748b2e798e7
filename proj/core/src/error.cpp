#include "nlidisc/error.hpp"

namespace nlidisc {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::file_not_found: return "FileNotFound";
    case Errc::malformed_line: return "MalformedLine";
    case Errc::unknown_label: return "UnknownLabel";
    case Errc::duplicate_id: return "DuplicateId";
    case Errc::empty_input: return "EmptyInput";
    case Errc::insufficient_problems: return "InsufficientProblems";
    case Errc::schema_error: return "SchemaError";
    case Errc::invariant_violation: return "InvariantViolation";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::missing_discussion: return "MissingDiscussion";
    case Errc::mode_mismatch: return "ModeMismatch";
    case Errc::equal_labels: return "EqualLabels";
    case Errc::final_not_held: return "FinalNotHeld";
    case Errc::empty_utterance: return "EmptyUtterance";
    case Errc::empty_history: return "EmptyHistory";
    case Errc::backend_unavailable: return "BackendUnavailable";
    case Errc::transient_backend: return "TransientBackendError";
    case Errc::auth_error: return "AuthError";
    case Errc::budget_exceeded: return "BudgetExceeded";
    case Errc::cache_miss: return "CacheMiss";
    case Errc::no_label_found: return "NoLabelFound";
    case Errc::ambiguous_label: return "AmbiguousLabel";
    case Errc::unknown_run: return "UnknownRun";
    case Errc::session_finalized: return "SessionFinalized";
    case Errc::invalid_phase: return "InvalidPhase";
    case Errc::unknown_session: return "UnknownSession";
    case Errc::empty_sequence: return "EmptySequence";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::insufficient_samples: return "InsufficientSamples";
    case Errc::degenerate_variance: return "DegenerateVariance";
    case Errc::empty_group: return "EmptyGroup";
    case Errc::untagged_utterance: return "UntaggedUtterance";
    case Errc::empty_pool: return "EmptyPool";
    case Errc::no_markers: return "NoMarkers";
    case Errc::fewer_than_two_utterances: return "FewerThanTwoUtterances";
    case Errc::io_error: return "IOError";
    case Errc::config_error: return "ConfigError";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace nlidisc
