#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace restorisk {

enum class ErrorCode {
  // forecasting
  SeriesTooShort,
  NonUniformSpacing,
  EmptyDataset,
  DivergedTraining,
  ShapeMismatch,
  // attacks
  NonFiniteLoss,
  MissingTargetFeature,
  InvalidConfig,
  // cold load pickup
  TimeBeforePickup,
  IndexOutOfRange,
  // feeder
  SchemaError,
  DanglingReference,
  PhaseMismatch,
  NonRadialCore,
  UnknownSwitch,
  MissingBase,
  // solver
  MalformedProblem,
  NodeLimitReached,
  // planning / validation
  Infeasible,
  MalformedStage,
  UnexpectedlyFeasible,
  PlanFeederMismatch,
  // experiment
  ConfigError,
  StageFailure,
  // io
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace restorisk
