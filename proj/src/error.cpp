#include "mfa/error.hpp"

namespace mfa {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MultiAttach: return "MULTI_ATTACH";
    case ErrorCode::TriggerWrite: return "TRIGGER_WRITE";
    case ErrorCode::ReadOnly: return "READ_ONLY";
    case ErrorCode::WriteOnly: return "WRITE_ONLY";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::UnknownArchive: return "UNKNOWN_ARCHIVE";
    case ErrorCode::ScriptExhausted: return "SCRIPT_EXHAUSTED";
    case ErrorCode::HttpError: return "HTTP_ERROR";
    case ErrorCode::EmptyCompletion: return "EMPTY_COMPLETION";
    case ErrorCode::SinkIo: return "SINK_IO";
    case ErrorCode::BackendConfig: return "BACKEND_CONFIG";
    case ErrorCode::ClassifierParse: return "CLASSIFIER_PARSE";
    case ErrorCode::BadPriority: return "BAD_PRIORITY";
    case ErrorCode::TriggerConfig: return "TRIGGER_CONFIG";
    case ErrorCode::Unvalidated: return "UNVALIDATED";
    case ErrorCode::UnknownState: return "UNKNOWN_STATE";
    case ErrorCode::DeadEnd: return "DEAD_END";
    case ErrorCode::StepBudget: return "STEP_BUDGET";
    case ErrorCode::NotFinal: return "NOT_FINAL";
    case ErrorCode::ScriptUnderrun: return "SCRIPT_UNDERRUN";
    case ErrorCode::SessionEnded: return "SESSION_ENDED";
    case ErrorCode::InputRequired: return "INPUT_REQUIRED";
    case ErrorCode::InputUnexpected: return "INPUT_UNEXPECTED";
    case ErrorCode::Io: return "IO";
    case ErrorCode::Parse: return "PARSE";
    case ErrorCode::BadLabel: return "BAD_LABEL";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::InsufficientDistractors: return "INSUFFICIENT_DISTRACTORS";
    case ErrorCode::BadPercentage: return "BAD_PERCENTAGE";
  }
  return "UNKNOWN";
}

}  // namespace mfa
