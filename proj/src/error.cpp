#include "restorisk/error.hpp"

namespace restorisk {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::NonUniformSpacing: return "NonUniformSpacing";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::MissingTargetFeature: return "MissingTargetFeature";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TimeBeforePickup: return "TimeBeforePickup";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::PhaseMismatch: return "PhaseMismatch";
    case ErrorCode::NonRadialCore: return "NonRadialCore";
    case ErrorCode::UnknownSwitch: return "UnknownSwitch";
    case ErrorCode::MissingBase: return "MissingBase";
    case ErrorCode::MalformedProblem: return "MalformedProblem";
    case ErrorCode::NodeLimitReached: return "NodeLimitReached";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::MalformedStage: return "MalformedStage";
    case ErrorCode::UnexpectedlyFeasible: return "UnexpectedlyFeasible";
    case ErrorCode::PlanFeederMismatch: return "PlanFeederMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::StageFailure: return "StageFailure";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace restorisk
