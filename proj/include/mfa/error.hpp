#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mfa {

enum class ErrorCode {
  // history
  MultiAttach,
  TriggerWrite,
  ReadOnly,
  WriteOnly,
  NotFound,
  UnknownArchive,
  // backends
  ScriptExhausted,
  HttpError,
  EmptyCompletion,
  SinkIo,
  BackendConfig,
  // triggers
  ClassifierParse,
  BadPriority,
  TriggerConfig,
  // automaton / runner
  Unvalidated,
  UnknownState,
  DeadEnd,
  StepBudget,
  NotFinal,
  ScriptUnderrun,
  SessionEnded,
  InputRequired,
  InputUnexpected,
  // io / eval
  Io,
  Parse,
  BadLabel,
  EmptyDataset,
  InsufficientDistractors,
  BadPercentage,
};

/// Stable upper-snake name used in reports, transcripts and HTTP bodies.
std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(code_name(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mfa
