#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cpm/types.hpp"

namespace cpm {

struct CpResult {
  Vec3 cp = Vec3::Zero();
  double dist = 0.0;
  bool converged = true;
};

/// Closest-point oracle for a surface or curve embedded in R^2 or R^3.
///
/// Implementations are immutable after construction and safe to query from
/// several threads at once.
class Surface {
 public:
  virtual ~Surface() = default;

  /// Embedding dimension d (2 or 3).
  virtual int dim() const = 0;
  /// Intrinsic dimension: 0 for points, 1 for curves, 2 for surfaces and
  /// codimension-zero planar regions.
  virtual int manifold_dim() const = 0;

  virtual CpResult closest_point(const Vec3& x) const = 0;

  virtual bool has_boundary() const { return false; }
  /// cp_{dS}(x). Throws if the surface is closed.
  virtual CpResult boundary_closest_point(const Vec3& x) const;

  /// Some point on the surface, used to seed tube construction.
  virtual Vec3 sample_point() const = 0;
  /// Points on the surface with spacing at most `spacing` (curves and points
  /// only; surfaces return a single sample).
  virtual std::vector<Vec3> sample(double /*spacing*/) const { return {sample_point()}; }

  virtual std::string name() const = 0;
};

using SurfacePtr = std::shared_ptr<const Surface>;

// Analytic shapes.
SurfacePtr make_point(const Vec3& p, int dim);
SurfacePtr make_circle(const Vec3& center, double radius);  // in R^2
SurfacePtr make_circle3(const Vec3& center, const Vec3& normal, double radius);
/// Arc of the circle {center + radius (cos t e1 + sin t e2)}, t in [t0, t1].
/// With dim == 2 the circle lies in the xy-plane.
SurfacePtr make_arc(const Vec3& center, const Vec3& e1, const Vec3& e2, double radius, double t0,
                    double t1, int dim);
SurfacePtr make_sphere(const Vec3& center, double radius);
/// Torus around the z-axis through `center`.
SurfacePtr make_torus(const Vec3& center, double major_radius, double minor_radius);
/// Axis-aligned square [lo,hi]^2. In R^2 this is a codimension-zero region; in
/// R^3 it lies in the plane z = 0.
SurfacePtr make_plane_square(double lo, double hi, int dim);
SurfacePtr make_segment(const Vec3& a, const Vec3& b, int dim);
SurfacePtr make_polyline(std::vector<Vec3> points, bool closed, int dim);
SurfacePtr make_composite(std::vector<SurfacePtr> parts);

struct ParametricDesc {
  int dim = 3;
  int params = 1;  // 1 (curve) or 2 (surface)
  std::function<Vec3(const Eigen::Vector2d&)> eval;
  /// Optional partial derivatives; central differences are used when absent.
  std::function<void(const Eigen::Vector2d&, Vec3& du, Vec3& dv)> deriv;
  Eigen::Vector2d lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d hi = Eigen::Vector2d::Ones();
  std::array<bool, 2> periodic{false, false};
  int samples = 1000;  // per parameter dimension
  int max_iter = 200;
  std::string label = "parametric";
};
SurfacePtr make_parametric(ParametricDesc desc);

struct LevelSetDesc {
  int dim = 3;
  std::function<double(const Vec3&)> phi;
  std::function<Vec3(const Vec3&)> grad;
  std::function<Mat3(const Vec3&)> hess;
  /// Point whose projection provides the tube seed.
  Vec3 hint = Vec3::UnitX();
  std::string label = "levelset";
};
SurfacePtr make_levelset(LevelSetDesc desc);

struct SignedDistanceDesc {
  int dim = 3;
  int manifold_dim = 2;
  std::function<double(const Vec3&)> dist;
  std::function<Vec3(const Vec3&)> grad;
  Vec3 hint = Vec3::UnitX();
  std::string label = "signed-distance";
};
SurfacePtr make_signed_distance(SignedDistanceDesc desc);

// Named parametric curves.
/// (v cos(a s), v sin(a s), sin(b s)) with v = R + cos(b s), s in [0, 2pi).
SurfacePtr make_torus_knot(double a, double b, double major_radius);
/// Planar closed curve in R^2 (or the plane z = 0 of R^3).
SurfacePtr make_planar_param_curve(double a, double b, double c, int dim);

/// Level set (x1 - x3^2)^2 + x2^2 + x3^2 - 1 = 0.
LevelSetDesc dziuk_levelset();
SurfacePtr make_dziuk_surface();

/// cp_S(2 cp_S(x) - x).
Vec3 reflected_query(const Surface& surface, const Vec3& x);
/// cp_S(2 cp_C(x) - x).
Vec3 reflected_query_about_curve(const Surface& surface, const Surface& curve, const Vec3& x);

}  // namespace cpm
