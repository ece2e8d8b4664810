#pragma once

#include <stdexcept>
#include <string>

namespace stagdid {

// Stable machine-readable error codes. The CLI serializes these verbatim,
// so renaming a token is a breaking change.
enum class ErrorCode {
  // panel
  Unbalanced,
  Nonabsorbing,
  MissingValue,
  CohortAtFirstPeriod,
  CohortUnknownPeriod,
  NoNeverTreated,
  NoTreated,
  EmptyCell,
  BaseEqualsTarget,
  // numkit
  AllColumnsDropped,
  NonfiniteInput,
  SingleCluster,
  SeparationDetected,
  NoVariation,
  UnknownColumn,
  // twfe
  MoreThanTwoPeriods,
  NonpositiveCounterfactual,
  // csdid
  OverlapViolation,
  InsufficientControls,
  // aggregate
  MissingCell,
  NoEligibleCohort,
  ReplicateDegenerate,
  // sensitivity
  TooFewPrePeriods,
  NoPrePeriods,
  // simlab
  EmptyCohort,
  BadScenario,
  // cli / io
  ConfigUnknownColumn,
  ConfigMissingSeed,
  ConfigInvalid,
  IoError,
  CsvParse,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace stagdid
