#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace twoscale {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CSparse = Eigen::SparseMatrix<cplx>;
using RSparse = Eigen::SparseMatrix<double>;
using CTriplet = Eigen::Triplet<cplx>;

/// Failure categories raised by the pipeline.  Every stage reports through
/// the same exception type so the command-line front end can map a category
/// onto an exit code without string matching.
enum class ErrorCode {
  EllipticityViolation,
  RankDeficiency,
  NonSolvable,
  SolverBreakdown,
  IdentityViolation,
  EmptyCluster,
  NotIsolated,
  SolveFailure,
  DegenerateT,
  FirstOrderRouteMismatch,
  SolvabilityDefect,
  OrderLimit,
  ResolutionError,
  CountMismatch,
  InvalidArgument,
};

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EllipticityViolation: return "EllipticityViolation";
    case ErrorCode::RankDeficiency: return "RankDeficiency";
    case ErrorCode::NonSolvable: return "NonSolvable";
    case ErrorCode::SolverBreakdown: return "SolverBreakdown";
    case ErrorCode::IdentityViolation: return "IdentityViolation";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::NotIsolated: return "NotIsolated";
    case ErrorCode::SolveFailure: return "SolveFailure";
    case ErrorCode::DegenerateT: return "DegenerateT";
    case ErrorCode::FirstOrderRouteMismatch: return "FirstOrderRouteMismatch";
    case ErrorCode::SolvabilityDefect: return "SolvabilityDefect";
    case ErrorCode::OrderLimit: return "OrderLimit";
    case ErrorCode::ResolutionError: return "ResolutionError";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

/// Spectral norm-free matrix size measure used for residual reporting.
template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace twoscale
