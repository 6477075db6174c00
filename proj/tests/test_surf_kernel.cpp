#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpm/errors.hpp"
#include "cpm/mesh.hpp"
#include "cpm/surface.hpp"

using namespace cpm;

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 random_point(std::mt19937& rng, double lo, double hi, int dim) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec3 x(u(rng), u(rng), u(rng));
  if (dim == 2) x.z() = 0.0;
  return x;
}

}  // namespace

TEST(ClosestPoint, SphereRadialProjection) {
  const auto s = make_sphere(Vec3::Zero(), 1.0);
  const CpResult r = s->closest_point(Vec3(2, 0, 0));
  EXPECT_NEAR((r.cp - Vec3(1, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.dist, 1.0);
}

TEST(ClosestPoint, CircleCentreIsAmbiguous) {
  const auto c = make_circle(Vec3::Zero(), 1.0);
  EXPECT_THROW(c->closest_point(Vec3::Zero()), AmbiguousClosestPoint);
  try {
    c->closest_point(Vec3::Zero());
  } catch (const AmbiguousClosestPoint& e) {
    EXPECT_EQ(e.code(), ErrorCode::AmbiguousClosestPoint);
    EXPECT_DOUBLE_EQ(e.dist(), 1.0);
  }
}

TEST(ClosestPoint, CompositePicksNearerPart) {
  // Sphere distance 0.9, segment distance 0.1.
  const auto comp = make_composite({make_sphere(Vec3::Zero(), 1.0), make_segment(Vec3(2, 0, 0), Vec3(3, 0, 0), 3)});
  const CpResult r = comp->closest_point(Vec3(1.9, 0, 0));
  EXPECT_NEAR((r.cp - Vec3(2, 0, 0)).norm(), 0.0, 1e-14);
  EXPECT_NEAR(r.dist, 0.1, 1e-14);
}

TEST(ClosestPoint, CompositeDistanceIsMinimumOverParts) {
  const SurfacePtr a = make_sphere(Vec3(0.3, 0, 0), 0.7);
  const SurfacePtr b = make_torus(Vec3(0, 0, 0.2), 1.2, 0.3);
  const auto comp = make_composite({a, b});
  std::mt19937 rng(7);
  for (int k = 0; k < 500; ++k) {
    const Vec3 x = random_point(rng, -2, 2, 3);
    const double expect = std::min(a->closest_point(x).dist, b->closest_point(x).dist);
    EXPECT_EQ(comp->closest_point(x).dist, expect);
  }
}

TEST(ClosestPointParametric, CircleRay) {
  ParametricDesc d;
  d.dim = 2;
  d.eval = [](const Eigen::Vector2d& t) { return Vec3(std::cos(t[0]), std::sin(t[0]), 0); };
  d.lo = Eigen::Vector2d(0, 0);
  d.hi = Eigen::Vector2d(2 * kPi, 0);
  d.periodic = {true, false};
  const auto s = make_parametric(d);
  const CpResult r = s->closest_point(Vec3(2, 0, 0));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR((r.cp - Vec3(1, 0, 0)).norm(), 0.0, 1e-9);
}

TEST(ClosestPointParametric, TorusKnotFixedPoint) {
  const auto knot = make_torus_knot(3, 7, 3);
  const double s = 0.3;
  const double v = 3 + std::cos(7 * s);
  const Vec3 x(v * std::cos(3 * s), v * std::sin(3 * s), std::sin(7 * s));
  const CpResult r = knot->closest_point(x);
  EXPECT_NEAR((r.cp - x).norm(), 0.0, 1e-9);
  EXPECT_NEAR(r.dist, 0.0, 1e-9);
}

TEST(ClosestPointParametric, ParabolaMatchesBruteForceScan) {
  ParametricDesc d;
  d.dim = 2;
  d.eval = [](const Eigen::Vector2d& t) { return Vec3(t[0], t[0] * t[0], 0); };
  d.lo = Eigen::Vector2d(-3, 0);
  d.hi = Eigen::Vector2d(3, 0);
  const auto s = make_parametric(d);
  const Vec3 x(0, 1, 0);
  const CpResult r = s->closest_point(x);

  double best = 1e300;
  const int n = 1000000;
  for (int k = 0; k <= n; ++k) {
    const double t = -3.0 + 6.0 * k / n;
    best = std::min(best, (Vec3(t, t * t, 0) - x).norm());
  }
  EXPECT_NEAR(std::abs(r.cp.x()), std::sqrt(0.5), 1e-6);
  EXPECT_NEAR(r.cp.y(), 0.5, 1e-6);
  EXPECT_NEAR(r.dist, best, 1e-9);
  EXPECT_LE(r.dist, best + 1e-12);
}

TEST(ClosestPointLevelSet, SphereRadial) {
  LevelSetDesc d;
  d.phi = [](const Vec3& x) { return x.squaredNorm() - 1.0; };
  d.grad = [](const Vec3& x) { return Vec3(2.0 * x); };
  d.hess = [](const Vec3&) { return Mat3(2.0 * Mat3::Identity()); };
  const auto s = make_levelset(d);
  const CpResult r = s->closest_point(Vec3(0, 0, 2));
  EXPECT_NEAR((r.cp - Vec3(0, 0, 1)).norm(), 0.0, 1e-10);
  EXPECT_NEAR(r.dist, 1.0, 1e-10);
}

TEST(ClosestPointLevelSet, DziukPointOnSurface) {
  const auto s = make_dziuk_surface();
  const CpResult r = s->closest_point(Vec3(1, 0, 0));
  EXPECT_NEAR((r.cp - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(r.dist, 0.0, 1e-12);
}

TEST(ClosestPointLevelSet, DziukKktAndBruteForce) {
  const LevelSetDesc ls = dziuk_levelset();
  const auto s = make_dziuk_surface();
  const Vec3 x(1.2, 0.1, -0.1);
  const CpResult r = s->closest_point(x);
  EXPECT_LE(std::abs(ls.phi(r.cp)), 1e-8);
  const Vec3 g = ls.grad(r.cp);
  const Vec3 d = x - r.cp;
  EXPECT_LE(d.cross(g).norm() / (d.norm() * g.norm()), 1e-6);

  // (x1 - z^2)^2 + x2^2 = 1 - z^2: circles of radius cos(a) centred at (z^2, 0, z).
  double best = 1e300;
  const double h = 1e-3;
  for (double a = -kPi / 2; a <= kPi / 2; a += h) {
    const double z = std::sin(a), rho = std::cos(a);
    for (double b = 0; b < 2 * kPi; b += h) {
      const Vec3 y(z * z + rho * std::cos(b), rho * std::sin(b), z);
      best = std::min(best, (y - x).norm());
    }
  }
  EXPECT_LE(r.dist, best + 1e-12);
  EXPECT_GE(r.dist, best - 2e-3);
}

TEST(ClosestPointMesh, SingleTriangle) {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.triangles = {{0, 1, 2}};
  const auto s = make_mesh(m);
  EXPECT_NEAR((s->closest_point(Vec3(0.25, 0.25, 1)).cp - Vec3(0.25, 0.25, 0)).norm(), 0.0, 1e-15);
  // Projection onto the hypotenuse x + y = 1.
  EXPECT_NEAR((s->closest_point(Vec3(2, 2, 0)).cp - Vec3(0.5, 0.5, 0)).norm(), 0.0, 1e-15);
  EXPECT_TRUE(s->has_boundary());
}

TEST(ClosestPointMesh, EmptyMeshRejected) {
  EXPECT_THROW(
      {
        try {
          make_mesh(TriangleMesh{});
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::EmptyMesh);
          throw;
        }
      },
      Error);
}

TEST(ClosestPointMesh, IcosphereMatchesBruteForce) {
  const auto s = make_mesh(make_icosphere(3));
  EXPECT_FALSE(s->has_boundary());
  std::mt19937 rng(11);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 x = random_point(rng, -1.5, 1.5, 3);
    const MeshCp fast = s->closest_point_detailed(x);
    const MeshCp slow = s->closest_point_brute_force(x);
    EXPECT_NEAR(fast.dist, slow.dist, 1e-14);
    EXPECT_NEAR((fast.cp - slow.cp).norm(), 0.0, 1e-12);
  }
}

TEST(ReflectedQuery, InteriorPointsReflectToTheirClosestPoint) {
  const auto plane = make_plane_square(-1, 1, 3);
  EXPECT_NEAR((reflected_query(*plane, Vec3(0, 0, 0.3)) - Vec3::Zero()).norm(), 0.0, 1e-15);
  const auto circle = make_circle(Vec3::Zero(), 1.0);
  EXPECT_NEAR((reflected_query(*circle, Vec3(1.5, 0, 0)) - Vec3(1, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(ReflectedQuery, SegmentPastEndpoint) {
  const auto seg = make_segment(Vec3(0, 0, 0), Vec3(1, 0, 0), 2);
  // Reflection (0.8, -0.1) projects to the interior.
  EXPECT_NEAR((reflected_query(*seg, Vec3(1.2, 0.1, 0)) - Vec3(0.8, 0, 0)).norm(), 0.0, 1e-15);
}

TEST(ReflectedQuery, AboutCurve) {
  const auto axis = make_segment(Vec3(-5, 0, 0), Vec3(5, 0, 0), 2);
  const auto origin = make_point(Vec3::Zero(), 2);
  EXPECT_NEAR((reflected_query_about_curve(*axis, *origin, Vec3(0.3, 0.2, 0)) - Vec3(-0.3, 0, 0)).norm(), 0.0, 1e-15);

  // A query on C maps to cp_S of itself.
  const auto sphere = make_sphere(Vec3::Zero(), 1.0);
  const auto equator = make_circle3(Vec3::Zero(), Vec3::UnitZ(), 1.0);
  const Vec3 on_c(std::cos(0.4), std::sin(0.4), 0);
  EXPECT_NEAR((reflected_query_about_curve(*sphere, *equator, on_c) - on_c).norm(), 0.0, 1e-14);

  // Slightly above the equator, outside the sphere: the mirror lies below.
  const Vec3 x = 1.05 * Vec3(std::cos(0.4), std::sin(0.4), 0) + Vec3(0, 0, 0.05);
  const Vec3 m = reflected_query_about_curve(*sphere, *equator, x);
  EXPECT_LT(m.z(), 0.0);
  EXPECT_NEAR(m.norm(), 1.0, 1e-14);
  // cp_C(x) = (cos 0.4, sin 0.4, 0); mirror 2 cp_C - x, then radial projection.
  const Vec3 mirror = 2.0 * Vec3(std::cos(0.4), std::sin(0.4), 0) - x;
  EXPECT_NEAR((m - mirror.normalized()).norm(), 0.0, 1e-14);
}

TEST(ClosestPointProperties, IdempotenceAndDistanceConsistency) {
  std::vector<std::pair<SurfacePtr, int>> shapes = {
      {make_sphere(Vec3(0.1, 0, 0), 0.8), 3},
      {make_torus(Vec3::Zero(), 1.0, 0.35), 3},
      {make_circle(Vec3::Zero(), 1.0), 2},
      {make_dziuk_surface(), 3},
      {make_mesh(make_icosphere(2)), 3},
      {make_torus_knot(2, 3, 2.0), 3},
      {make_circle3(Vec3::Zero(), Vec3(1, 1, 0).normalized(), 1.0), 3},
  };
  std::mt19937 rng(3);
  for (const auto& [s, dim] : shapes) {
    for (int k = 0; k < 200; ++k) {
      const Vec3 x = random_point(rng, -1.4, 1.4, dim);
      CpResult r;
      try {
        r = s->closest_point(x);
      } catch (const AmbiguousClosestPoint&) {
        continue;
      }
      EXPECT_EQ(r.dist, (x - r.cp).norm()) << s->name();
      const CpResult again = s->closest_point(r.cp);
      EXPECT_LE((again.cp - r.cp).norm(), 1e-8) << s->name();
    }
  }
}

TEST(ClosestPointProperties, LevelSetMatchesSampledSurface) {
  // Unit sphere as a level set against the analytic projection.
  LevelSetDesc d;
  d.phi = [](const Vec3& x) { return x.squaredNorm() - 1.0; };
  d.grad = [](const Vec3& x) { return Vec3(2.0 * x); };
  d.hess = [](const Vec3&) { return Mat3(2.0 * Mat3::Identity()); };
  const auto ls = make_levelset(d);
  std::mt19937 rng(5);
  for (int k = 0; k < 1000; ++k) {
    Vec3 x = random_point(rng, -1.5, 1.5, 3);
    if (x.norm() < 0.2) continue;
    EXPECT_NEAR((ls->closest_point(x).cp - x.normalized()).norm(), 0.0, 1e-9);
  }
}
