#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/SparseCore>

#include "cpm/sparse_operator.hpp"

namespace cpm {

/// A = m I + n (diag(L) + (L - diag(L)) E), with identity rows where `fixed`
/// is set. The operators are borrowed and must outlive the spec.
struct OperatorSpec {
  double m = 0.0;
  double n = 1.0;
  const SparseOperator* E = nullptr;
  const SparseOperator* L = nullptr;
  const std::vector<std::uint8_t>* fixed = nullptr;
};

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double seconds = 0.0;
  int restarts = 0;
  bool direct = false;
};

enum class PrecondMode { None, Diagonal, DampedJacobi };

struct SolverConfig {
  double tol = 1e-10;
  int max_iter = -1;  // -1: 10 N
  PrecondMode precond = PrecondMode::DampedJacobi;
  int jacobi_sweeps = 5;
  double jacobi_omega = 2.0 / 3.0;
};

/// Dot product with a fixed blocked reduction order, independent of the
/// thread count.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Matrix-free action of A. Stores diag(L) and the off-diagonal part once.
class SystemOperator {
 public:
  explicit SystemOperator(const OperatorSpec& spec);

  int size() const { return n_; }
  const OperatorSpec& spec() const { return spec_; }
  /// v = A u via a = E u, b = offdiag(L) a, a = diag(L) u, v = m u + n a + n b.
  void apply(std::span<const double> u, std::span<double> v) const;
  std::vector<double> apply(std::span<const double> u) const;
  /// diag(L) u + offdiag(L) E u, without the m/n scaling or fixed rows.
  std::vector<double> apply_m(std::span<const double> u) const;
  /// offdiag(L) x.
  std::vector<double> apply_offdiag(std::span<const double> x) const;
  /// Diagonal of A as used by the preconditioners: m + n L_ii (1 on fixed rows).
  double diag_a(int i) const;
  bool is_fixed(int i) const { return spec_.fixed && !spec_.fixed->empty() && (*spec_.fixed)[i]; }

 private:
  OperatorSpec spec_;
  int n_ = 0;
  std::vector<double> diag_;
  SparseOperator off_;
  mutable std::vector<double> a_;
  mutable std::vector<double> b_;
};

/// Right-hand side of the linear system once the affine band constants e are
/// moved over: f - n offdiag(L) e. Fixed rows take `fixed_values`.
std::vector<double> effective_rhs(const SystemOperator& A, std::span<const double> f, std::span<const double> e,
                                  std::span<const double> fixed_values = {});

class Preconditioner {
 public:
  Preconditioner(const SystemOperator& A, PrecondMode mode, int sweeps = 5, double omega = 2.0 / 3.0);
  void apply(std::span<const double> r, std::span<double> z) const;
  PrecondMode mode() const { return mode_; }

 private:
  const SystemOperator& A_;
  PrecondMode mode_;
  int sweeps_;
  double omega_;
  std::vector<double> inv_diag_;
  mutable std::vector<double> work_;
};

/// Preconditioned BiCGSTAB. `x` holds the initial guess on entry. Restarts
/// once from the current iterate on breakdown, then throws Breakdown.
SolveStats bicgstab(const SystemOperator& A, std::span<const double> f, std::span<double> x, const SolverConfig& cfg);

/// Assembled A (compressed columns), used by the direct path and tests.
Eigen::SparseMatrix<double> assemble_matrix(const OperatorSpec& spec);

/// Sparse LU solve for systems up to `cap` unknowns.
std::vector<double> direct_solve_small(const OperatorSpec& spec, std::span<const double> f, int cap = 20000,
                                       SolveStats* stats = nullptr);

}  // namespace cpm
