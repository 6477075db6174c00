#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include <Eigen/SVD>

#include "cpm/errors.hpp"
#include "cpm/surface.hpp"

namespace cpm {

namespace {

using Vec2 = Eigen::Vector2d;

/// Uniform-grid nearest neighbour lookup over the parametric seed cloud.
class SeedLocator {
 public:
  void build(const std::vector<Vec3>& pts) {
    pts_ = pts;
    box_ = Eigen::AlignedBox3d();
    for (const auto& p : pts_) box_.extend(p);
    const double diag = std::max(box_.diagonal().norm(), 1e-12);
    const double per_cell = 4.0;
    const double cells = std::max(1.0, static_cast<double>(pts_.size()) / per_cell);
    h_ = std::max(diag / std::cbrt(cells), 1e-9 * diag + 1e-300);
    for (int a = 0; a < 3; ++a) {
      n_[a] = std::max(1, static_cast<int>(std::ceil(box_.sizes()[a] / h_)) + 1);
    }
    cells_.clear();
    for (int i = 0; i < static_cast<int>(pts_.size()); ++i) cells_[key(cell_of(pts_[i]))].push_back(i);
  }

  int nearest(const Vec3& x) const {
    const Vec3 xc = x.cwiseMax(box_.min()).cwiseMin(box_.max());
    const double off = (x - xc).norm();
    const std::array<int, 3> c = cell_of(xc);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    const int kmax = std::max({n_[0], n_[1], n_[2]});
    for (int k = 0; k <= kmax; ++k) {
      for (int i = c[0] - k; i <= c[0] + k; ++i) {
        for (int j = c[1] - k; j <= c[1] + k; ++j) {
          for (int l = c[2] - k; l <= c[2] + k; ++l) {
            const int ring = std::max({std::abs(i - c[0]), std::abs(j - c[1]), std::abs(l - c[2])});
            if (ring != k) continue;
            const auto it = cells_.find(key({i, j, l}));
            if (it == cells_.end()) continue;
            for (int idx : it->second) {
              const double d = (pts_[idx] - x).squaredNorm();
              if (d < best_d || (d == best_d && idx < best)) {
                best_d = d;
                best = idx;
              }
            }
          }
        }
      }
      if (best >= 0) {
        const double bound = k * h_ - off;
        if (bound > 0 && bound * bound >= best_d) break;
      }
    }
    return best;
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - box_.min()[a]) / h_)), 0, n_[a] - 1);
    }
    return c;
  }
  static std::uint64_t key(const std::array<int, 3>& c) { return lattice_key({c[0], c[1], c[2]}); }

  std::vector<Vec3> pts_;
  Eigen::AlignedBox3d box_;
  double h_ = 1.0;
  std::array<int, 3> n_{1, 1, 1};
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

class ParametricShape final : public Surface {
 public:
  explicit ParametricShape(ParametricDesc d) : d_(std::move(d)) {
    if (d_.params < 1 || d_.params > 2) fail(ErrorCode::InvalidConfig, "parametric: params must be 1 or 2");
    const int n = std::max(2, d_.samples);
    const int nv = d_.params == 2 ? n : 1;
    for (int j = 0; j < nv; ++j) {
      for (int i = 0; i < n; ++i) {
        Vec2 t = d_.lo;
        t[0] = d_.lo[0] + (d_.hi[0] - d_.lo[0]) * i / (d_.periodic[0] ? n : n - 1);
        if (d_.params == 2) t[1] = d_.lo[1] + (d_.hi[1] - d_.lo[1]) * j / (d_.periodic[1] ? n : n - 1);
        params_.push_back(t);
        samples_.push_back(eval(t));
      }
    }
    locator_.build(samples_);
  }

  int dim() const override { return d_.dim; }
  int manifold_dim() const override { return d_.params; }

  CpResult closest_point(const Vec3& x) const override {
    const int seed = locator_.nearest(x);
    return minimize(x, params_[seed], d_.params, -1, 0.0);
  }

  bool has_boundary() const override {
    for (int a = 0; a < d_.params; ++a) {
      if (!d_.periodic[a]) return true;
    }
    return false;
  }

  CpResult boundary_closest_point(const Vec3& x) const override {
    if (!has_boundary()) Surface::boundary_closest_point(x);
    CpResult best;
    best.dist = std::numeric_limits<double>::infinity();
    const auto consider = [&](const CpResult& r) {
      if (r.dist < best.dist) best = r;
    };
    if (d_.params == 1) {
      for (double t : {d_.lo[0], d_.hi[0]}) {
        const Vec3 p = eval(Vec2(t, 0.0));
        consider({p, (x - p).norm(), true});
      }
      return best;
    }
    // Boundary of a two-parameter patch: each non-periodic parameter
    // contributes two edge curves, minimized along the free parameter.
    for (int a = 0; a < 2; ++a) {
      if (d_.periodic[a]) continue;
      const int free = 1 - a;
      for (double fixed : {d_.lo[a], d_.hi[a]}) {
        Vec2 seed_t;
        double seed_d = std::numeric_limits<double>::infinity();
        const int n = std::max(2, d_.samples);
        for (int i = 0; i < n; ++i) {
          Vec2 t;
          t[a] = fixed;
          t[free] = d_.lo[free] + (d_.hi[free] - d_.lo[free]) * i / (n - 1);
          const double dd = (eval(t) - x).squaredNorm();
          if (dd < seed_d) {
            seed_d = dd;
            seed_t = t;
          }
        }
        consider(minimize(x, seed_t, 1, free, fixed));
      }
    }
    return best;
  }

  Vec3 sample_point() const override { return samples_.front(); }

  std::vector<Vec3> sample(double spacing) const override {
    if (d_.params != 1) return {sample_point()};
    std::vector<Vec3> out;
    const int n = std::max(2, d_.samples);
    const double span = d_.hi[0] - d_.lo[0];
    const int segs = d_.periodic[0] ? n : n - 1;
    for (int i = 0; i < segs; ++i) {
      const double t0 = d_.lo[0] + span * i / segs;
      const double t1 = d_.lo[0] + span * (i + 1) / segs;
      const Vec3 a = eval(Vec2(t0, 0.0)), b = eval(Vec2(t1, 0.0));
      const int sub = std::max(1, static_cast<int>(std::ceil((b - a).norm() / spacing)));
      for (int k = 0; k < sub; ++k) out.push_back(eval(Vec2(t0 + (t1 - t0) * k / sub, 0.0)));
    }
    if (!d_.periodic[0]) out.push_back(eval(Vec2(d_.hi[0], 0.0)));
    return out;
  }

  std::string name() const override { return d_.label; }

 private:
  Vec3 eval(const Vec2& t) const {
    Vec3 p = d_.eval(t);
    if (d_.dim == 2) p.z() = 0.0;
    return p;
  }

  void derivs(const Vec2& t, Vec3& du, Vec3& dv) const {
    if (d_.deriv) {
      d_.deriv(t, du, dv);
      if (d_.dim == 2) {
        du.z() = 0.0;
        dv.z() = 0.0;
      }
      return;
    }
    const double h = 1e-6;
    du = (eval(t + Vec2(h, 0)) - eval(t - Vec2(h, 0))) / (2 * h);
    dv = d_.params == 2 ? Vec3((eval(t + Vec2(0, h)) - eval(t - Vec2(0, h))) / (2 * h)) : Vec3::Zero();
  }

  double clamp_param(int a, double v) const {
    if (d_.periodic[a]) return v;
    return std::clamp(v, d_.lo[a], d_.hi[a]);
  }

  // Minimizes 1/2 |p(t) - x|^2 over `nfree` parameters. With nfree == 1 and
  // free_axis >= 0 only that parameter moves (the other is held at `fixed`).
  CpResult minimize(const Vec3& x, Vec2 t, int nfree, int free_axis, double fixed) const {
    const auto axis = [&](int k) { return free_axis >= 0 ? free_axis : k; };
    const auto project = [&](Vec2 s) {
      for (int k = 0; k < nfree; ++k) s[axis(k)] = clamp_param(axis(k), s[axis(k)]);
      if (free_axis >= 0) s[1 - free_axis] = fixed;
      return s;
    };
    const auto objective = [&](const Vec2& s) { return 0.5 * (eval(s) - x).squaredNorm(); };
    const auto gradient = [&](const Vec2& s) {
      Vec3 du, dv;
      derivs(s, du, dv);
      const Vec3 r = eval(s) - x;
      Vec2 g = Vec2::Zero();
      const Vec3 cols[2] = {du, dv};
      for (int k = 0; k < nfree; ++k) g[k] = cols[axis(k)].dot(r);
      return g;
    };

    t = project(t);
    double f = objective(t);
    for (int it = 0; it < d_.max_iter; ++it) {
      const Vec2 g = gradient(t);
      // Hessian by central differences of the analytic gradient.
      Eigen::Matrix2d H = Eigen::Matrix2d::Identity();
      const double h = 1e-6;
      for (int k = 0; k < nfree; ++k) {
        Vec2 tp = t, tm = t;
        tp[axis(k)] += h;
        tm[axis(k)] -= h;
        const Vec2 col = (gradient(tp) - gradient(tm)) / (2 * h);
        for (int l = 0; l < nfree; ++l) H(l, k) = col[l];
      }
      if (nfree == 2) H = 0.5 * (H + H.transpose()).eval();
      Vec2 step = Vec2::Zero();
      bool newton = false;
      if (nfree == 1) {
        if (H(0, 0) > 1e-14) {
          step[0] = -g[0] / H(0, 0);
          newton = true;
        }
      } else {
        Eigen::LLT<Eigen::Matrix2d> llt(H);
        if (llt.info() == Eigen::Success) {
          step = -llt.solve(g);
          newton = true;
        }
      }
      if (!newton) {
        const double gn = g.norm();
        if (gn == 0.0) return finish(x, t, true);
        step = -g / std::max(gn, 1e-300) * std::min(1.0, gn);
      }
      double alpha = 1.0;
      Vec2 trial;
      double ftrial = f;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        trial = t;
        for (int k = 0; k < nfree; ++k) trial[axis(k)] += alpha * step[k];
        trial = project(trial);
        ftrial = objective(trial);
        if (ftrial <= f + 1e-4 * alpha * g.dot(step) || ftrial <= f) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      const double moved = (trial - t).norm();
      if (!accepted || moved < 1e-10) {
        if (accepted) t = trial;
        return finish(x, t, true);
      }
      t = trial;
      f = ftrial;
    }
    fail(ErrorCode::NotConverged, d_.label + ": closest-point iteration hit the cap");
  }

  CpResult finish(const Vec3& x, const Vec2& t, bool ok) const {
    const Vec3 p = eval(t);
    return {p, (x - p).norm(), ok};
  }

  ParametricDesc d_;
  std::vector<Vec2> params_;
  std::vector<Vec3> samples_;
  SeedLocator locator_;
};

class LevelSetShape final : public Surface {
 public:
  explicit LevelSetShape(LevelSetDesc d) : d_(std::move(d)) {}
  int dim() const override { return d_.dim; }
  int manifold_dim() const override { return d_.dim - 1; }

  CpResult closest_point(const Vec3& x) const override {
    const int d = d_.dim;
    // Stage 1: move onto the level set along the gradient.
    Vec3 cp = x;
    bool stage1 = false;
    for (int it = 0; it < 100; ++it) {
      const Vec3 g = grad(cp);
      const double gg = g.squaredNorm();
      if (gg == 0.0) fail(ErrorCode::SingularHessian, d_.label + ": vanishing gradient in projection");
      const Vec3 step = phi(cp) * g / gg;
      cp -= step;
      if (step.norm() < 1e-10) {
        stage1 = true;
        break;
      }
    }
    if (!stage1) fail(ErrorCode::NotConverged, d_.label + ": level-set projection did not converge");

    // Stage 2: Newton on the Lagrangian 1/2|y - x|^2 + lambda phi(y).
    const Vec3 start = cp;
    const Vec3 g0 = grad(cp);
    double lambda = (x - cp).dot(g0) / g0.squaredNorm();
    for (int it = 0; it < 100; ++it) {
      const Vec3 g = grad(cp);
      const Mat3 H = hess(cp);
      Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
      Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
      const Vec3 r = cp - x + lambda * g;
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) K(a, b) = (a == b ? 1.0 : 0.0) + lambda * H(a, b);
        K(a, d) = g[a];
        K(d, a) = g[a];
        rhs[a] = -r[a];
      }
      rhs[d] = -phi(cp);
      const int n = d + 1;
      const Eigen::MatrixXd Kn = K.topLeftCorner(n, n);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Kn, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& sv = svd.singularValues();
      if (sv[n - 1] == 0.0 || sv[0] / sv[n - 1] > 1e14) return descend(x, start);
      const Eigen::VectorXd delta = svd.solve(rhs.head(n));
      for (int a = 0; a < d; ++a) cp[a] += delta[a];
      lambda += delta[d];
      if (delta.norm() < 1e-10) {
        // The stage-1 point bounds the distance; a farther KKT point is not
        // the minimizer.
        if ((x - cp).norm() > (x - start).norm() + 1e-12) return descend(x, start);
        return {cp, (x - cp).norm(), true};
      }
    }
    return descend(x, start);
  }

  Vec3 sample_point() const override { return closest_point(d_.hint).cp; }
  std::string name() const override { return d_.label; }

 private:
  // Projected descent on 1/2|y - x|^2, used when x sits near the focal set
  // and the Newton system degenerates.
  CpResult descend(const Vec3& x, Vec3 y) const {
    for (int it = 0; it < 20000; ++it) {
      const Vec3 g = grad(y);
      const double gg = g.squaredNorm();
      if (gg == 0.0) break;
      Vec3 r = y - x;
      r -= g * (r.dot(g) / gg);
      if (r.norm() < 1e-10) return {y, (x - y).norm(), true};
      y -= 0.5 * r;
      for (int k = 0; k < 100; ++k) {
        const Vec3 gy = grad(y);
        const Vec3 step = phi(y) * gy / std::max(gy.squaredNorm(), 1e-300);
        y -= step;
        if (step.norm() < 1e-12) break;
      }
    }
    fail(ErrorCode::SingularHessian, d_.label + ": singular Newton system in closest-point solve");
  }

  double phi(const Vec3& y) const { return d_.phi(y); }
  Vec3 grad(const Vec3& y) const {
    Vec3 g = d_.grad(y);
    if (d_.dim == 2) g.z() = 0.0;
    return g;
  }
  Mat3 hess(const Vec3& y) const { return d_.hess(y); }

  LevelSetDesc d_;
};

}  // namespace

SurfacePtr make_parametric(ParametricDesc desc) {
  return std::make_shared<ParametricShape>(std::move(desc));
}

SurfacePtr make_levelset(LevelSetDesc desc) { return std::make_shared<LevelSetShape>(std::move(desc)); }

SurfacePtr make_torus_knot(double a, double b, double major_radius) {
  ParametricDesc d;
  d.dim = 3;
  d.params = 1;
  d.lo = Vec2(0.0, 0.0);
  d.hi = Vec2(2.0 * std::numbers::pi, 0.0);
  d.periodic = {true, false};
  d.label = "torus-knot";
  d.eval = [=](const Vec2& t) {
    const double s = t[0];
    const double v = major_radius + std::cos(b * s);
    return Vec3(v * std::cos(a * s), v * std::sin(a * s), std::sin(b * s));
  };
  d.deriv = [=](const Vec2& t, Vec3& du, Vec3& dv) {
    const double s = t[0];
    const double v = major_radius + std::cos(b * s);
    const double dvds = -b * std::sin(b * s);
    du = Vec3(dvds * std::cos(a * s) - a * v * std::sin(a * s),
              dvds * std::sin(a * s) + a * v * std::cos(a * s), b * std::cos(b * s));
    dv.setZero();
  };
  return make_parametric(std::move(d));
}

SurfacePtr make_planar_param_curve(double a, double b, double c, int dim) {
  ParametricDesc d;
  d.dim = dim;
  d.params = 1;
  d.lo = Vec2(0.0, 0.0);
  d.hi = Vec2(2.0 * std::numbers::pi, 0.0);
  d.periodic = {true, false};
  d.label = "planar-param-curve";
  const auto v = [=](double s) {
    return (std::cos(s) * (0.5 * (a + b) + std::sin(a * s) + std::sin(b * s)) + 0.5 * (a + b)) / (a + b);
  };
  const auto dv = [=](double s) {
    return (-std::sin(s) * (0.5 * (a + b) + std::sin(a * s) + std::sin(b * s)) +
            std::cos(s) * (a * std::cos(a * s) + b * std::cos(b * s))) /
           (a + b);
  };
  d.eval = [=](const Vec2& t) {
    const double s = t[0];
    return Vec3(v(s) * std::cos(s) + c, v(s) * std::sin(s) + c, 0.0);
  };
  d.deriv = [=](const Vec2& t, Vec3& du, Vec3& dvv) {
    const double s = t[0];
    du = Vec3(dv(s) * std::cos(s) - v(s) * std::sin(s), dv(s) * std::sin(s) + v(s) * std::cos(s), 0.0);
    dvv.setZero();
  };
  return make_parametric(std::move(d));
}

LevelSetDesc dziuk_levelset() {
  LevelSetDesc d;
  d.dim = 3;
  d.label = "dziuk";
  d.hint = Vec3(2.0, 0.0, 0.0);
  d.phi = [](const Vec3& x) {
    const double a = x[0] - x[2] * x[2];
    return a * a + x[1] * x[1] + x[2] * x[2] - 1.0;
  };
  d.grad = [](const Vec3& x) {
    const double a = x[0] - x[2] * x[2];
    return Vec3(2.0 * a, 2.0 * x[1], -4.0 * x[2] * a + 2.0 * x[2]);
  };
  d.hess = [](const Vec3& x) {
    const double a = x[0] - x[2] * x[2];
    Mat3 H = Mat3::Zero();
    H(0, 0) = 2.0;
    H(0, 2) = H(2, 0) = -4.0 * x[2];
    H(1, 1) = 2.0;
    H(2, 2) = 8.0 * x[2] * x[2] - 4.0 * a + 2.0;
    return H;
  };
  return d;
}

SurfacePtr make_dziuk_surface() { return make_levelset(dziuk_levelset()); }

}  // namespace cpm
