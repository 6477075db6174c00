#include "cpm/errors.hpp"

namespace cpm {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::AmbiguousClosestPoint: return "AmbiguousClosestPoint";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::SeedOutsideTube: return "SeedOutsideTube";
    case ErrorCode::CurveOffSurface: return "CurveOffSurface";
    case ErrorCode::StencilOutsideTube: return "StencilOutsideTube";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::OrientationRequired: return "OrientationRequired";
    case ErrorCode::MissingBandTwin: return "MissingBandTwin";
    case ErrorCode::TwoSidedUnsupported: return "TwoSidedUnsupported";
    case ErrorCode::Breakdown: return "Breakdown";
    case ErrorCode::ZeroDiagonal: return "ZeroDiagonal";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::OffSurface: return "OffSurface";
    case ErrorCode::Step1SolverPolicy: return "Step1SolverPolicy";
    case ErrorCode::ConnectivityMismatch: return "ConnectivityMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InconsistentDimensions: return "InconsistentDimensions";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return 2;
    case ErrorCode::ParseError: return 3;
    case ErrorCode::IoError: return 4;
    default: return 10 + static_cast<int>(code);
  }
}

}  // namespace cpm
