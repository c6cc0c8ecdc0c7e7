#pragma once

#include <stdexcept>
#include <string>

namespace mpar {

enum class Err {
  MixedMissingness,
  LabelOutOfRange,
  ScoreOutOfRange,
  MalformedRow,
  NonMonotonicFrameIndex,
  UnlabeledPrefix,
  EmptyTable,
  NonDivisorRate,
  EmptyVideo,
  StreamTooShort,
  HistoryBudgetExceeded,
  InvalidSpec,
  ShapeMismatch,
  EmptyTrainSet,
  VersionMismatch,
  CorruptContainer,
  UnsatisfiableConstraints,
  NoSuccessfulTrials,
  TrialFailed,
  LengthMismatch,
  EvenWindow,
  ConfigError,
  IoError,
};

const char* err_name(Err e);

// All domain failures carry a code so callers (and tests) can branch on the
// exact condition instead of matching message text.
class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}

  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& what) { throw Error(code, what); }

}  // namespace mpar
