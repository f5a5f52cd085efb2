#include "dynlab/error.hpp"

namespace dynlab {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::RetriesExhausted: return "RetriesExhausted";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooFewCandidates: return "TooFewCandidates";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateSeparation: return "DegenerateSeparation";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::InfeasibleConstraint: return "InfeasibleConstraint";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dynlab
