#include "stagdid/error.hpp"

namespace stagdid {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Unbalanced: return "UNBALANCED";
    case ErrorCode::Nonabsorbing: return "NONABSORBING";
    case ErrorCode::MissingValue: return "MISSING_VALUE";
    case ErrorCode::CohortAtFirstPeriod: return "COHORT_AT_FIRST_PERIOD";
    case ErrorCode::CohortUnknownPeriod: return "COHORT_UNKNOWN_PERIOD";
    case ErrorCode::NoNeverTreated: return "NO_NEVER_TREATED";
    case ErrorCode::NoTreated: return "NO_TREATED";
    case ErrorCode::EmptyCell: return "EMPTY_CELL";
    case ErrorCode::BaseEqualsTarget: return "BASE_EQUALS_TARGET";
    case ErrorCode::AllColumnsDropped: return "ALL_COLUMNS_DROPPED";
    case ErrorCode::NonfiniteInput: return "NONFINITE_INPUT";
    case ErrorCode::SingleCluster: return "SINGLE_CLUSTER";
    case ErrorCode::SeparationDetected: return "SEPARATION_DETECTED";
    case ErrorCode::NoVariation: return "NO_VARIATION";
    case ErrorCode::UnknownColumn: return "UNKNOWN_COLUMN";
    case ErrorCode::MoreThanTwoPeriods: return "MORE_THAN_TWO_PERIODS";
    case ErrorCode::NonpositiveCounterfactual: return "NONPOSITIVE_COUNTERFACTUAL";
    case ErrorCode::OverlapViolation: return "OVERLAP_VIOLATION";
    case ErrorCode::InsufficientControls: return "INSUFFICIENT_CONTROLS";
    case ErrorCode::MissingCell: return "MISSING_CELL";
    case ErrorCode::NoEligibleCohort: return "NO_ELIGIBLE_COHORT";
    case ErrorCode::ReplicateDegenerate: return "REPLICATE_DEGENERATE";
    case ErrorCode::TooFewPrePeriods: return "TOO_FEW_PRE_PERIODS";
    case ErrorCode::NoPrePeriods: return "NO_PRE_PERIODS";
    case ErrorCode::EmptyCohort: return "EMPTY_COHORT";
    case ErrorCode::BadScenario: return "BAD_SCENARIO";
    case ErrorCode::ConfigUnknownColumn: return "CONFIG_UNKNOWN_COLUMN";
    case ErrorCode::ConfigMissingSeed: return "CONFIG_MISSING_SEED";
    case ErrorCode::ConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::CsvParse: return "CSV_PARSE";
  }
  return "UNKNOWN";
}

}  // namespace stagdid
