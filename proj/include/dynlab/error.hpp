#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dynlab {

enum class ErrorCode {
  InvalidArgument,
  RetriesExhausted,
  Unreachable,
  DimensionMismatch,
  LengthMismatch,
  TooFewCandidates,
  ShapeMismatch,
  DegenerateSeparation,
  NotConverged,
  Empty,
  EmptyTrajectory,
  ConfigMismatch,
  RankDeficient,
  SingularCovariance,
  DegenerateVariance,
  InfeasibleConstraint,
  SchemaMismatch,
  Io,
};

std::string_view error_code_name(ErrorCode code);

// All library failures surface as this exception type; `code()` is stable
// and is what the CLI reports in its machine-readable error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dynlab
