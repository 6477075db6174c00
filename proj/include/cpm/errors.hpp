#pragma once

#include <stdexcept>
#include <string>

namespace cpm {

enum class ErrorCode {
  AmbiguousClosestPoint,
  NotConverged,
  SingularHessian,
  EmptyMesh,
  SeedOutsideTube,
  CurveOffSurface,
  StencilOutsideTube,
  DimensionMismatch,
  DegenerateFrame,
  OrientationRequired,
  MissingBandTwin,
  TwoSidedUnsupported,
  Breakdown,
  ZeroDiagonal,
  TooLarge,
  SingularMatrix,
  OffSurface,
  Step1SolverPolicy,
  ConnectivityMismatch,
  ParseError,
  InconsistentDimensions,
  IoError,
  InvalidConfig,
};

const char* error_name(ErrorCode code);

/// Process exit status used by the command line tool for each error kind.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a query point sits on the medial axis. Carries the distance so
/// that tube construction can ignore points that would be rejected anyway.
class AmbiguousClosestPoint : public Error {
 public:
  AmbiguousClosestPoint(double dist, const std::string& what)
      : Error(ErrorCode::AmbiguousClosestPoint, what), dist_(dist) {}
  double dist() const { return dist_; }

 private:
  double dist_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace cpm
