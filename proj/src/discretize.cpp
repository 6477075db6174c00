#include "cpm/discretize.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "cpm/errors.hpp"
#include "cpm/surface.hpp"

namespace cpm {

namespace {

constexpr int kMaxP = 7;

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

[[noreturn]] void outside(const LatticeIndex& k, const Vec3& query) {
  std::ostringstream msg;
  msg << "interpolation stencil for (" << query.transpose() << ") needs missing lattice cell (" << k[0] << ", "
      << k[1] << ", " << k[2] << ")";
  fail(ErrorCode::StencilOutsideTube, msg.str());
}

}  // namespace

void lagrange_weights_1d(int p, double s, double* w) {
  for (int j = 0; j <= p; ++j) {
    if (s == static_cast<double>(j)) {
      for (int k = 0; k <= p; ++k) w[k] = k == j ? 1.0 : 0.0;
      return;
    }
  }
  double sum = 0.0;
  for (int j = 0; j <= p; ++j) {
    const double b = ((j % 2) ? -1.0 : 1.0) * binomial(p, j);
    w[j] = b / (s - j);
    sum += w[j];
  }
  for (int j = 0; j <= p; ++j) w[j] /= sum;
}

LatticeIndex interp_base(const SparseGrid& g, const Vec3& q, int p) {
  LatticeIndex b{0, 0, 0};
  for (int a = 0; a < g.dim; ++a) {
    b[a] = static_cast<int>(std::floor((q[a] - g.origin[a]) / g.dx - 0.5 * (p - 1)));
  }
  return b;
}

int interp_stencil_into(const SparseGrid& g, const Vec3& q, int p, int* dofs, double* weights) {
  if (p < 1 || p > kMaxP) fail(ErrorCode::InvalidConfig, "interpolation degree out of range");
  const LatticeIndex b = interp_base(g, q, p);
  double w1[3][kMaxP + 1];
  for (int a = 0; a < 3; ++a) {
    if (a < g.dim) {
      lagrange_weights_1d(p, (q[a] - g.origin[a]) / g.dx - b[a], w1[a]);
    } else {
      w1[a][0] = 1.0;
    }
  }
  const int n0 = p + 1, n1 = p + 1, n2 = g.dim == 3 ? p + 1 : 1;
  int count = 0;
  for (int i = 0; i < n0; ++i) {
    for (int j = 0; j < n1; ++j) {
      for (int k = 0; k < n2; ++k) {
        const LatticeIndex cell{b[0] + i, b[1] + j, b[2] + k};
        const int dof = g.find(cell);
        if (dof < 0) outside(cell, q);
        dofs[count] = dof;
        weights[count] = w1[0][i] * w1[1][j] * w1[2][k];
        ++count;
      }
    }
  }
  return count;
}

StencilRef interp_stencil(const SparseGrid& g, const Vec3& q, int p) {
  const int n = static_cast<int>(std::pow(p + 1, g.dim));
  StencilRef s;
  s.dof_ids.resize(n);
  s.weights.resize(n);
  interp_stencil_into(g, q, p, s.dof_ids.data(), s.weights.data());
  s.cells.reserve(n);
  for (int d : s.dof_ids) s.cells.push_back(g.index[d]);
  s.director = q;
  return s;
}

SparseOperator build_extension(const SparseGrid& g, int p) {
  const int n = g.size();
  const int width = static_cast<int>(std::pow(p + 1, g.dim));
  SparseOperator E;
  E.n_rows = n;
  E.n_cols = n;
  E.row_ptr.resize(n + 1);
  E.cols.resize(static_cast<std::size_t>(n) * width);
  E.vals.resize(static_cast<std::size_t>(n) * width);
  for (int i = 0; i <= n; ++i) E.row_ptr[i] = i * width;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    interp_stencil_into(g, g.cp[i], p, &E.cols[static_cast<std::size_t>(i) * width],
                        &E.vals[static_cast<std::size_t>(i) * width]);
  }
  return E;
}

SparseOperator build_laplacian(const SparseGrid& g) {
  const int n = g.size();
  const double h2 = 1.0 / (g.dx * g.dx);
  SparseOperator L;
  L.n_cols = n;
  L.row_ptr.reserve(n + 1);
  L.cols.reserve(static_cast<std::size_t>(n) * (2 * g.dim + 1));
  L.vals.reserve(static_cast<std::size_t>(n) * (2 * g.dim + 1));
  int c[7];
  double w[7];
  for (int i = 0; i < n; ++i) {
    int m = 1;
    c[0] = i;
    for (int a = 0; a < g.dim; ++a) {
      for (int s = 0; s < 2; ++s) {
        const int j = g.neighbors[2 * g.dim * i + 2 * a + s];
        if (j < 0) continue;
        c[m] = j;
        w[m] = h2;
        ++m;
      }
    }
    if (m == 1) {
      std::ostringstream msg;
      msg << "DOF " << i << " has no face neighbours in the tube";
      fail(ErrorCode::StencilOutsideTube, msg.str());
    }
    w[0] = -(m - 1) * h2;
    L.push_row({c, static_cast<std::size_t>(m)}, {w, static_cast<std::size_t>(m)});
  }
  return L;
}

std::vector<double> apply_stabilized(const SparseOperator& L, const SparseOperator& E, std::span<const double> u) {
  if (L.n_cols != E.n_rows || E.n_cols != static_cast<int>(u.size()) || L.n_rows > static_cast<int>(u.size())) {
    fail(ErrorCode::DimensionMismatch, "apply_stabilized: operator sizes disagree");
  }
  const std::vector<double> eu = E * u;
  std::vector<double> out(L.n_rows);
  for (int i = 0; i < L.n_rows; ++i) {
    double s = 0.0;
    for (int k = L.row_ptr[i]; k < L.row_ptr[i + 1]; ++k) {
      const int j = L.cols[k];
      s += j == i ? L.vals[k] * u[i] : L.vals[k] * eu[j];
    }
    out[i] = s;
  }
  return out;
}

std::vector<Mat3> cp_jacobians_raw(const SparseGrid& g) {
  const int n = g.size();
  std::vector<Mat3> J(n, Mat3::Zero());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < g.dim; ++a) {
      const int lo = g.neighbor(i, a, -1), hi = g.neighbor(i, a, 1);
      Vec3 col = Vec3::Zero();
      if (lo >= 0 && hi >= 0) {
        col = (g.cp[hi] - g.cp[lo]) / (2.0 * g.dx);
      } else if (hi >= 0) {
        col = (g.cp[hi] - g.cp[i]) / g.dx;
      } else if (lo >= 0) {
        col = (g.cp[i] - g.cp[lo]) / g.dx;
      }
      J[i].col(a) = col;
    }
  }
  return J;
}

std::vector<Mat3> extend_matrices(const SparseOperator& E, const std::vector<Mat3>& raw) {
  std::vector<Mat3> out(E.n_rows, Mat3::Zero());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < E.n_rows; ++i) {
    Mat3 s = Mat3::Zero();
    for (int k = E.row_ptr[i]; k < E.row_ptr[i + 1]; ++k) s += E.vals[k] * raw[E.cols[k]];
    out[i] = s;
  }
  return out;
}

TangentFrames tangent_frames(const SparseGrid& g, const SparseOperator& E) {
  const std::vector<Mat3> J = extend_matrices(E, cp_jacobians_raw(g));
  const int n = g.size();
  TangentFrames f;
  f.projector.assign(n, Mat3::Zero());
  f.normal.assign(n, Vec3::Zero());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const Mat3 S = 0.5 * (J[i] + J[i].transpose());
    Mat3 P = Mat3::Zero();
    Vec3 normal = Vec3::Zero();
    if (g.dim == 2) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(S.topLeftCorner<2, 2>());
      int near_null = 0;
      for (int k = 0; k < 2; ++k) {
        const Eigen::Vector2d v = es.eigenvectors().col(k);
        if (std::abs(es.eigenvalues()[k]) >= 0.5) P.topLeftCorner<2, 2>() += v * v.transpose();
        if (std::abs(es.eigenvalues()[k]) < std::abs(es.eigenvalues()[near_null])) near_null = k;
      }
      normal.head<2>() = es.eigenvectors().col(near_null);
    } else {
      Eigen::SelfAdjointEigenSolver<Mat3> es(S);
      int near_null = 0;
      for (int k = 0; k < 3; ++k) {
        const Vec3 v = es.eigenvectors().col(k);
        if (std::abs(es.eigenvalues()[k]) >= 0.5) P += v * v.transpose();
        if (std::abs(es.eigenvalues()[k]) < std::abs(es.eigenvalues()[near_null])) near_null = k;
      }
      normal = es.eigenvectors().col(near_null);
    }
    f.projector[i] = P;
    f.normal[i] = normal;
  }
  return f;
}

std::vector<Vec3> surface_gradient_normalized(const SparseGrid& g, std::span<const double> u, const TangentFrames& fr) {
  const int n = g.size();
  std::vector<Vec3> X(n, Vec3::Zero());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    if (g.edge_of_tube[i]) continue;
    Vec3 grad = Vec3::Zero();
    for (int a = 0; a < g.dim; ++a) {
      grad[a] = (u[g.neighbor(i, a, 1)] - u[g.neighbor(i, a, -1)]) / (2.0 * g.dx);
    }
    grad = fr.projector[i] * grad;
    const double nrm = grad.norm();
    X[i] = nrm < 1e-14 ? Vec3::Zero() : Vec3(grad / nrm);
  }
  return X;
}

std::vector<double> divergence_centered(const SparseGrid& g, std::span<const Vec3> X) {
  const int n = g.size();
  std::vector<double> div(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    if (g.edge_of_tube[i]) continue;
    double s = 0.0;
    for (int a = 0; a < g.dim; ++a) s += (X[g.neighbor(i, a, 1)][a] - X[g.neighbor(i, a, -1)][a]) / (2.0 * g.dx);
    div[i] = s;
  }
  return div;
}

std::vector<double> interpolate_at(const SparseGrid& g, std::span<const double> u, std::span<const Vec3> targets,
                                   int p) {
  std::vector<double> out(targets.size());
  const int width = static_cast<int>(std::pow(p + 1, g.dim));
  std::vector<int> dofs(width);
  std::vector<double> w(width);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    interp_stencil_into(g, targets[t], p, dofs.data(), w.data());
    double s = 0.0;
    for (int k = 0; k < width; ++k) s += w[k] * u[dofs[k]];
    out[t] = s;
  }
  return out;
}

double manufactured_rhs_dziuk(const Vec3& y, double c) {
  const LevelSetDesc ls = dziuk_levelset();
  if (std::abs(ls.phi(y)) > 1e-8) fail(ErrorCode::OffSurface, "manufactured_rhs_dziuk: point is not on the surface");
  const Vec3 gphi = ls.grad(y);
  const Mat3 Hphi = ls.hess(y);
  const double gn = gphi.norm();
  const Vec3 n = gphi / gn;
  const double kappa = (Hphi.trace() - n.dot(Hphi * n)) / gn;
  const double u = y[0] * y[1];
  const Vec3 grad_u(y[1], y[0], 0.0);
  Mat3 Hu = Mat3::Zero();
  Hu(0, 1) = Hu(1, 0) = 1.0;
  const double lap_s = 0.0 - n.dot(Hu * n) - kappa * grad_u.dot(n);
  return -lap_s + c * u;
}

}  // namespace cpm
