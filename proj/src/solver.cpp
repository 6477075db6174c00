#include "cpm/solver.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <Eigen/SparseLU>

#include "cpm/errors.hpp"

namespace cpm {

namespace {

constexpr std::size_t kBlock = 4096;
constexpr double kBreakdown = 1e-30;

void axpy_into(std::span<double> y, double a, std::span<const double> x) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < static_cast<std::ptrdiff_t>(nblocks); ++blk) {
    const std::size_t lo = blk * kBlock, hi = std::min(n, lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[blk] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

SystemOperator::SystemOperator(const OperatorSpec& spec) : spec_(spec) {
  if (!spec.E || !spec.L) fail(ErrorCode::InvalidConfig, "operator spec needs E and L");
  n_ = spec.L->n_rows;
  if (spec.L->n_cols != n_ || spec.E->n_rows != n_ || spec.E->n_cols != n_) {
    std::ostringstream msg;
    msg << "operator sizes disagree: L " << spec.L->n_rows << "x" << spec.L->n_cols << ", E " << spec.E->n_rows << "x"
        << spec.E->n_cols;
    fail(ErrorCode::DimensionMismatch, msg.str());
  }
  if (spec.fixed && !spec.fixed->empty() && static_cast<int>(spec.fixed->size()) != n_) {
    fail(ErrorCode::DimensionMismatch, "fixed-row mask has the wrong length");
  }
  split_diagonal(*spec.L, diag_, off_);
  a_.resize(n_);
  b_.resize(n_);
}

void SystemOperator::apply(std::span<const double> u, std::span<double> v) const {
  if (static_cast<int>(u.size()) != n_ || static_cast<int>(v.size()) != n_) {
    fail(ErrorCode::DimensionMismatch, "apply_A: vector length does not match the system");
  }
  spec_.E->multiply(u, a_);
  off_.multiply(a_, b_);
  const double m = spec_.m, nn = spec_.n;
  const double* d = diag_.data();
  const double* b = b_.data();
  const bool has_fixed = spec_.fixed && !spec_.fixed->empty();
  const std::uint8_t* fx = has_fixed ? spec_.fixed->data() : nullptr;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_; ++i) {
    v[i] = (fx && fx[i]) ? u[i] : m * u[i] + nn * (d[i] * u[i]) + nn * b[i];
  }
}

std::vector<double> SystemOperator::apply(std::span<const double> u) const {
  std::vector<double> v(n_);
  apply(u, v);
  return v;
}

std::vector<double> SystemOperator::apply_m(std::span<const double> u) const {
  std::vector<double> a = *spec_.E * u;
  std::vector<double> out = off_ * std::span<const double>(a);
  for (int i = 0; i < n_; ++i) out[i] += diag_[i] * u[i];
  return out;
}

std::vector<double> SystemOperator::apply_offdiag(std::span<const double> x) const { return off_ * x; }

double SystemOperator::diag_a(int i) const { return is_fixed(i) ? 1.0 : spec_.m + spec_.n * diag_[i]; }

std::vector<double> effective_rhs(const SystemOperator& A, std::span<const double> f, std::span<const double> e,
                                  std::span<const double> fixed_values) {
  const int n = A.size();
  if (static_cast<int>(f.size()) != n) fail(ErrorCode::DimensionMismatch, "rhs length does not match the system");
  std::vector<double> out(f.begin(), f.end());
  if (!e.empty()) {
    const std::vector<double> oe = A.apply_offdiag(e);
    for (int i = 0; i < n; ++i) out[i] -= A.spec().n * oe[i];
  }
  for (int i = 0; i < n; ++i) {
    if (A.is_fixed(i)) out[i] = fixed_values.empty() ? 0.0 : fixed_values[i];
  }
  return out;
}

Preconditioner::Preconditioner(const SystemOperator& A, PrecondMode mode, int sweeps, double omega)
    : A_(A), mode_(mode), sweeps_(sweeps), omega_(omega) {
  if (mode == PrecondMode::None) return;
  const int n = A.size();
  inv_diag_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double d = A.diag_a(i);
    if (d == 0.0 || !std::isfinite(d)) {
      std::ostringstream msg;
      msg << "zero diagonal m + n L_ii in row " << i;
      fail(ErrorCode::ZeroDiagonal, msg.str());
    }
    inv_diag_[i] = 1.0 / d;
  }
  if (mode == PrecondMode::DampedJacobi) work_.resize(n);
}

void Preconditioner::apply(std::span<const double> r, std::span<double> z) const {
  const int n = A_.size();
  if (mode_ == PrecondMode::None) {
    std::copy(r.begin(), r.end(), z.begin());
    return;
  }
  if (mode_ == PrecondMode::Diagonal) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) z[i] = r[i] * inv_diag_[i];
    return;
  }
  // z <- z + omega D^{-1} (r - A z), starting from z = 0.
  std::fill(z.begin(), z.end(), 0.0);
  for (int s = 0; s < sweeps_; ++s) {
    if (s == 0) {
      for (int i = 0; i < n; ++i) z[i] = omega_ * inv_diag_[i] * r[i];
      continue;
    }
    A_.apply(z, work_);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) z[i] += omega_ * inv_diag_[i] * (r[i] - work_[i]);
  }
}

SolveStats bicgstab(const SystemOperator& A, std::span<const double> f, std::span<double> x, const SolverConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = A.size();
  if (static_cast<int>(f.size()) != n || static_cast<int>(x.size()) != n) {
    fail(ErrorCode::DimensionMismatch, "bicgstab: vector length does not match the system");
  }
  if (!(cfg.tol > 0.0)) fail(ErrorCode::InvalidConfig, "solver tolerance must be positive");
  const int max_iter = cfg.max_iter > 0 ? cfg.max_iter : 10 * n;
  const Preconditioner M(A, cfg.precond, cfg.jacobi_sweeps, cfg.jacobi_omega);

  SolveStats st;
  const double fnorm = norm2(f);
  const auto finish = [&](bool converged) {
    std::vector<double> r = A.apply(std::span<const double>(x.data(), x.size()));
    for (int i = 0; i < n; ++i) r[i] = f[i] - r[i];
    st.residual = fnorm > 0.0 ? norm2(r) / fnorm : norm2(r);
    st.converged = converged && st.residual <= cfg.tol;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
  };
  if (fnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    return finish(true);
  }
  const double target = cfg.tol * fnorm;

  std::vector<double> r(n), r0(n), p(n, 0.0), v(n, 0.0), y(n), z(n), s(n), t(n);
  const auto true_residual = [&]() {
    A.apply(std::span<const double>(x.data(), x.size()), r);
    for (int i = 0; i < n; ++i) r[i] = f[i] - r[i];
  };
  true_residual();
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  const auto reset = [&]() {
    r0 = r;
    rho = alpha = omega = 1.0;
    std::fill(p.begin(), p.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
  };
  reset();
  int breakdowns = 0;
  const auto on_breakdown = [&](const char* what) {
    if (breakdowns++ > 0) {
      std::ostringstream msg;
      msg << "BiCGSTAB breakdown (" << what << ") after " << st.iterations << " iterations";
      fail(ErrorCode::Breakdown, msg.str());
    }
    ++st.restarts;
    true_residual();
    reset();
  };

  double rnorm = norm2(r);
  while (st.iterations < max_iter) {
    if (rnorm <= target) {
      // Confirm with the true residual; restart the recurrence if it drifted.
      true_residual();
      rnorm = norm2(r);
      if (rnorm <= target) return finish(true);
      reset();
    }
    const double rho_old = rho;
    rho = dot(r0, r);
    if (std::abs(rho) < kBreakdown * norm2(r0) * rnorm || rho == 0.0) {
      on_breakdown("rho");
      rnorm = norm2(r);
      continue;
    }
    const double beta = (rho / rho_old) * (alpha / omega);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
    M.apply(p, y);
    A.apply(y, v);
    const double r0v = dot(r0, v);
    if (r0v == 0.0) {
      on_breakdown("r0.v");
      rnorm = norm2(r);
      continue;
    }
    alpha = rho / r0v;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
    ++st.iterations;
    if (norm2(s) <= target) {
      axpy_into(x, alpha, y);
      r = s;
      rnorm = norm2(r);
      continue;
    }
    M.apply(s, z);
    A.apply(z, t);
    const double tt = dot(t, t);
    omega = tt > 0.0 ? dot(t, s) / tt : 0.0;
    if (std::abs(omega) < kBreakdown) {
      axpy_into(x, alpha, y);
      on_breakdown("omega");
      rnorm = norm2(r);
      continue;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * y[i] + omega * z[i];
      r[i] = s[i] - omega * t[i];
    }
    rnorm = norm2(r);
    if (!std::isfinite(rnorm)) fail(ErrorCode::Breakdown, "BiCGSTAB residual is not finite");
  }
  true_residual();
  return finish(norm2(r) <= target);
}

Eigen::SparseMatrix<double> assemble_matrix(const OperatorSpec& spec) {
  const SystemOperator A(spec);
  const int n = A.size();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> E = spec.E->to_eigen();
  std::vector<double> diag;
  SparseOperator off;
  split_diagonal(*spec.L, diag, off);
  const Eigen::SparseMatrix<double, Eigen::RowMajor> O = off.to_eigen();
  Eigen::SparseMatrix<double, Eigen::RowMajor> M = O * E;
  M *= spec.n;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(M.nonZeros() + n);
  for (int i = 0; i < n; ++i) {
    if (A.is_fixed(i)) {
      t.emplace_back(i, i, 1.0);
      continue;
    }
    t.emplace_back(i, i, spec.m + spec.n * diag[i]);
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(M, i); it; ++it) {
      t.emplace_back(i, static_cast<int>(it.col()), it.value());
    }
  }
  Eigen::SparseMatrix<double> out(n, n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

std::vector<double> direct_solve_small(const OperatorSpec& spec, std::span<const double> f, int cap,
                                       SolveStats* stats) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = spec.L ? spec.L->n_rows : 0;
  if (n > cap) {
    std::ostringstream msg;
    msg << "direct solve of " << n << " unknowns exceeds the cap of " << cap;
    fail(ErrorCode::TooLarge, msg.str());
  }
  if (static_cast<int>(f.size()) != n) fail(ErrorCode::DimensionMismatch, "rhs length does not match the system");
  Eigen::SparseMatrix<double> A = assemble_matrix(spec);
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) fail(ErrorCode::SingularMatrix, "sparse LU factorization failed: " + lu.lastErrorMessage());
  const Eigen::Map<const Eigen::VectorXd> b(f.data(), n);
  const Eigen::VectorXd x = lu.solve(b);
  if (lu.info() != Eigen::Success || !x.allFinite()) fail(ErrorCode::SingularMatrix, "sparse LU solve failed");
  if (stats) {
    const double fn = b.norm();
    stats->residual = fn > 0.0 ? (b - A * x).norm() / fn : (A * x).norm();
    stats->converged = true;
    stats->direct = true;
    stats->iterations = 0;
    stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return std::vector<double>(x.data(), x.data() + n);
}

}  // namespace cpm
