#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cpm/errors.hpp"
#include "cpm/problems.hpp"

using namespace cpm;

namespace {

constexpr double kPi = 3.14159265358979323846;

double max_of(std::span<const double> v) { return *std::max_element(v.begin(), v.end()); }
double min_of(std::span<const double> v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace

TEST(PoissonCircle, ExactSolutionValues) {
  const double tc = 1.022 * kPi;
  EXPECT_NEAR(poisson_circle_exact(tc + kPi, tc, true), 8.0, 1e-12);
  EXPECT_NEAR(poisson_circle_exact(tc + 1e-12, tc, true), 2.0, 1e-9);
  EXPECT_NEAR(poisson_circle_exact(tc - 1e-12, tc, true), 22.0, 1e-9);
  EXPECT_NEAR(poisson_circle_exact(tc + 0.5, tc, false), 2 * std::cos(0.5) + std::sin(0.5), 1e-12);
  EXPECT_NEAR(poisson_circle_exact(tc, tc, false), 2.0, 1e-12);
}

TEST(PoissonCircle, SolvesAndConverges) {
  std::vector<double> dx{0.1, 0.05, 0.025}, err;
  for (double h : dx) {
    PoissonCircleConfig cfg;
    cfg.dx = h;
    const ProblemResult r = solve_poisson_circle(cfg);
    ASSERT_EQ(r.points.size(), r.values.size());
    for (std::size_t k = 0; k < r.points.size(); ++k) {
      EXPECT_NEAR(r.exact[k], poisson_circle_exact(std::atan2(r.points[k].y(), r.points[k].x()), cfg.theta_c, true),
                  1e-12);
    }
    EXPECT_TRUE(r.stats.front().converged);
    EXPECT_GT(r.n_band, 0);
    err.push_back(r.error.max);
  }
  EXPECT_LT(err[0], 0.02);
  const double slope = fit_slope(dx, err);
  EXPECT_GT(slope, 1.5);
  EXPECT_LT(slope, 2.5);
}

TEST(PoissonCircle, OrderOneIsLessAccurate) {
  PoissonCircleConfig a, b;
  a.dx = b.dx = 0.05;
  b.method = IbcMethod::Order1;
  EXPECT_LT(solve_poisson_circle(a).error.max, solve_poisson_circle(b).error.max);
}

TEST(HeatSphere, ExactSolutionAndShortRun) {
  HeatSphereConfig cfg;
  cfg.dx = 0.2;
  const ProblemResult r = run_heat(cfg);
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const Vec3& y = r.points[k];
    ASSERT_NEAR(r.exact[k], std::exp(-0.2) * y.z() / y.norm(), 1e-12);
  }
  // Pole and equator of the exact solution.
  EXPECT_NEAR(std::exp(-0.2), 0.81873, 1e-5);
  // 0.1 / (0.1 * 0.2) = 5 Crank-Nicolson steps.
  EXPECT_EQ(r.stats.size(), 5u);
  for (const SolveStats& s : r.stats) EXPECT_TRUE(s.converged);
  EXPECT_LT(r.error.max, 0.01);
}

TEST(HeatSphere, CrankNicolsonPreservesConstants) {
  const auto S = make_sphere(Vec3::Zero(), 1.0);
  const SparseGrid g = build_tube(*S, 0.2, 3, 1);
  const CpmSystem sys = build_plain_system(g, 3);
  const double dt = 0.02;
  const SystemOperator lhs({1.0, -0.5 * dt, &sys.E, &sys.L, nullptr});
  const SystemOperator rhs_op({1.0, 0.5 * dt, &sys.E, &sys.L, nullptr});
  std::vector<double> u(g.size(), 1.75);
  for (int step = 0; step < 3; ++step) {
    const std::vector<double> f = rhs_op.apply(u);
    SolverConfig cfg;
    cfg.tol = 1e-14;
    const SolveStats st = bicgstab(lhs, f, u, cfg);
    EXPECT_TRUE(st.converged);
    for (double x : u) ASSERT_NEAR(x, 1.75, 1e-12);
  }
}

TEST(Dziuk, ExactAndShortRun) {
  DziukConfig cfg;
  cfg.dx = 0.1;
  const ProblemResult r = solve_screened_poisson_dziuk(cfg);
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    ASSERT_NEAR(r.exact[k], r.points[k].x() * r.points[k].y(), 1e-14);
  }
  EXPECT_LT(r.error.max, 0.05);
  EXPECT_TRUE(r.stats.front().converged);
}

TEST(Convergence, FitSlopeAndErrors) {
  const std::vector<double> dx{0.1, 0.05, 0.025}, err{3e-2, 7.5e-3, 1.875e-3};
  EXPECT_NEAR(fit_slope(dx, err), 2.0, 1e-12);
  const std::vector<double> one{0.1};
  try {
    fit_slope(one, one);
    FAIL() << "expected InvalidConfig";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
  const std::vector<double> vals{1, 2, 3}, ex{1, 2.5, 2};
  const ErrorNorms n = error_norms(vals, ex);
  EXPECT_DOUBLE_EQ(n.max, 1.0);
  EXPECT_DOUBLE_EQ(n.rms, std::sqrt(1.25 / 3.0));
}

TEST(Convergence, HarnessAndCsv) {
  const ConvergenceReport rep = convergence_harness(ProblemId::PoissonCircle, {0.1, 0.05}, IbcMethod::Order2);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_TRUE(std::isnan(rep.rows[0].order));
  EXPECT_NEAR(rep.rows[1].order, std::log2(rep.rows[0].error / rep.rows[1].error), 1e-12);
  EXPECT_NEAR(rep.slope, rep.rows[1].order, 1e-12);
  std::ostringstream out;
  write_convergence_csv(rep, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dx,error,order");
  std::getline(in, line);
  EXPECT_EQ(line.rfind("0.1,", 0), 0u) << line;
  EXPECT_EQ(line.back(), ',');
  std::getline(in, line);
  EXPECT_EQ(line.rfind("0.05,", 0), 0u) << line;
  EXPECT_NE(line.back(), ',');
}

TEST(Convergence, NamesRoundTrip) {
  for (ProblemId id : {ProblemId::PoissonCircle, ProblemId::PoissonCircleOneSided, ProblemId::HeatDirichlet,
                       ProblemId::HeatNeumann, ProblemId::DziukClosed, ProblemId::DziukOpen,
                       ProblemId::DziukDirichlet}) {
    EXPECT_EQ(parse_problem(problem_name(id)), id);
  }
  for (IbcMethod m : {IbcMethod::Order1, IbcMethod::Order2, IbcMethod::Nearest, IbcMethod::Ball}) {
    EXPECT_EQ(parse_method(method_name(m)), m);
  }
  EXPECT_THROW(parse_method("order3"), Error);
}

TEST(Geodesic, SphereNorthPole) {
  GeodesicConfig cfg;
  cfg.surface = make_sphere(Vec3::Zero(), 1.0);
  cfg.curve = make_point(Vec3(0, 0, 1), 3);
  cfg.dx = 0.1;
  const GeodesicResult r = geodesic_distance(cfg);
  ASSERT_EQ(r.points.size(), r.distance.size());
  double rel = 0.0;
  int counted = 0;
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const double exact = std::acos(std::clamp(r.points[k].z(), -1.0, 1.0));
    EXPECT_GE(r.distance[k], 0.0) << k;
    if (exact > 0.3) {
      rel += std::abs(r.distance[k] - exact) / exact;
      ++counted;
    }
  }
  EXPECT_LE(rel / counted, 0.1);
  for (const SolveStats& s : r.stats) EXPECT_TRUE(s.converged);
  EXPECT_EQ(r.stats.size(), 1u + 3u);
}

TEST(Geodesic, DirectPolicyCap) {
  GeodesicConfig cfg;
  cfg.surface = make_sphere(Vec3::Zero(), 1.0);
  cfg.curve = make_point(Vec3(0, 0, 1), 3);
  cfg.dx = 0.1;
  cfg.m = 1.0;
  cfg.direct_cap = 100;
  try {
    geodesic_distance(cfg);
    FAIL() << "expected Step1SolverPolicy";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Step1SolverPolicy);
  }
}

TEST(DiffusionCurves, ConstantsAndMaximumPrinciple) {
  DiffusionCurvesConfig cfg;
  cfg.surface = make_sphere(Vec3::Zero(), 1.0);
  cfg.curve = make_circle3(Vec3(0, 0, 0.3), Vec3::UnitZ(), std::sqrt(1 - 0.09));
  cfg.dx = 0.1;
  cfg.spec = BcSpec::two_sided_dirichlet(2, [](const Vec3&) { return Vec3(0, 0, 1); });
  cfg.channels.push_back({[](const Vec3&) { return 0.4; }, [](const Vec3&) { return 0.4; }});
  cfg.channels.push_back({[](const Vec3&) { return 1.0; }, [](const Vec3&) { return 0.0; }});
  const ChannelResult r = diffusion_curves(cfg);
  ASSERT_EQ(r.channels.size(), 2u);
  for (double v : r.channels[0]) ASSERT_NEAR(v, 0.4, 1e-8);
  EXPECT_GE(min_of(r.channels[1]), -1e-8);
  EXPECT_LE(max_of(r.channels[1]), 1.0 + 1e-8);
  // Both sides of C are represented.
  EXPECT_GT(max_of(r.channels[1]), 0.9);
  EXPECT_LT(min_of(r.channels[1]), 0.1);

  // Permuting channels permutes the outputs bitwise.
  DiffusionCurvesConfig swapped = cfg;
  std::swap(swapped.channels[0], swapped.channels[1]);
  const ChannelResult s = diffusion_curves(swapped);
  EXPECT_EQ(s.channels[0], r.channels[1]);
  EXPECT_EQ(s.channels[1], r.channels[0]);
}

TEST(DiffusionCurves, CodimZeroSquare) {
  DiffusionCurvesConfig cfg;
  cfg.surface = make_plane_square(-1, 1, 2);
  cfg.curve = make_circle(Vec3::Zero(), 0.5);
  cfg.dx = 0.05;
  cfg.spec = BcSpec::two_sided_dirichlet(2, [](const Vec3& y) { return y; });
  cfg.channels.push_back({[](const Vec3&) { return 1.0; }, [](const Vec3&) { return -1.0; }});
  const ChannelResult r = diffusion_curves(cfg);
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const double v = r.channels[0][k];
    ASSERT_GE(v, -1 - 1e-8);
    ASSERT_LE(v, 1 + 1e-8);
  }
  // Inside the circle the solution is the constant -1.
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    if (r.points[k].norm() < 0.3) {
      EXPECT_NEAR(r.channels[0][k], -1.0, 1e-8);
    }
  }
}

TEST(Vfd, TangentAndFlipsAcrossCurve) {
  VfdConfig cfg;
  cfg.surface = make_sphere(Vec3::Zero(), 1.0);
  cfg.curve = make_circle3(Vec3::Zero(), Vec3::UnitZ(), 1.0);
  cfg.dx = 0.1;
  cfg.spec = BcSpec::two_sided_dirichlet(1, [](const Vec3&) { return Vec3(0, 0, 1); });
  cfg.plus = [](const Vec3& y) { return Vec3(-y.y(), y.x(), 0); };
  cfg.minus = [](const Vec3& y) { return Vec3(y.y(), -y.x(), 0); };
  const VfdResult r = vector_field_design(cfg);
  ASSERT_EQ(r.field.size(), r.normal.size());
  int nonzero = 0, north = 0, south = 0;
  for (std::size_t k = 0; k < r.field.size(); ++k) {
    ASSERT_LE(std::abs(r.field[k].dot(r.normal[k])), 1e-12);
    nonzero += r.field[k].norm() > 1e-12;
    const Vec3& y = r.points[k];
    const Vec3 t(-y.y(), y.x(), 0);
    if (y.z() > 0.15 && y.z() < 0.4) north += r.field[k].dot(t) > 0;
    if (y.z() < -0.15 && y.z() > -0.4) south += r.field[k].dot(t) < 0;
  }
  EXPECT_GE(nonzero, 0.99 * r.field.size());
  EXPECT_GT(north, 0);
  EXPECT_GT(south, 0);
  int wrong = 0;
  for (std::size_t k = 0; k < r.field.size(); ++k) {
    const Vec3& y = r.points[k];
    const Vec3 t(-y.y(), y.x(), 0);
    if (y.z() > 0.15 && y.z() < 0.4) wrong += r.field[k].dot(t) <= 0;
    if (y.z() < -0.15 && y.z() > -0.4) wrong += r.field[k].dot(t) >= 0;
  }
  EXPECT_EQ(wrong, 0);
}

TEST(Vfd, PointSourceReachesWholeSphere) {
  VfdConfig cfg;
  cfg.surface = make_sphere(Vec3::Zero(), 1.0);
  cfg.curve = make_point(Vec3(1, 0, 0), 3);
  cfg.dx = 0.1;
  cfg.spec = BcSpec::dirichlet(1);
  cfg.plus = [](const Vec3&) { return Vec3(0, 0, 1); };
  const VfdResult r = vector_field_design(cfg);
  int nonzero = 0;
  for (std::size_t k = 0; k < r.field.size(); ++k) {
    ASSERT_LE(std::abs(r.field[k].dot(r.normal[k])), 1e-12);
    nonzero += r.field[k].norm() > 1e-14;
  }
  EXPECT_GE(nonzero, 0.99 * r.field.size());
}

TEST(HarmonicMap, IdentityIsNearlyFixed) {
  HarmonicMapConfig cfg;
  cfg.s1 = make_icosphere(2);
  cfg.s2 = cfg.s1;
  cfg.dx = 0.1;
  cfg.steps = 10;
  const HarmonicMapResult r = harmonic_map(cfg);
  ASSERT_EQ(r.step_displacement.size(), 10u);
  EXPECT_LE(max_of(r.step_displacement), 5 * cfg.dx);
  const auto S2 = make_mesh(cfg.s2);
  for (const Vec3& v : r.map) ASSERT_LE(S2->closest_point(v).dist, 1e-8);
  ASSERT_EQ(r.vertex_map.size(), cfg.s1.vertices.size());
  for (const Vec3& v : r.vertex_map) ASSERT_LE(S2->closest_point(v).dist, 1e-8);
}

TEST(HarmonicMap, LandmarkIsHonoured) {
  HarmonicMapConfig cfg;
  cfg.s1 = make_icosphere(2);
  cfg.s2 = make_icosphere(2, 1.5);
  cfg.dx = 0.1;
  cfg.steps = 10;
  const Vec3 a = cfg.s1.vertices[0];
  cfg.landmark = make_point(a, 3);
  cfg.landmark_map = [](const Vec3& y) { return 1.5 * y; };
  const HarmonicMapResult r = harmonic_map(cfg);
  double best = 1e9, err = 0.0;
  for (std::size_t k = 0; k < r.points.size(); ++k) {
    const double d = (r.points[k] - a).norm();
    if (d < best) best = d, err = (r.map[k] - 1.5 * a).norm();
  }
  EXPECT_LE(err, 5 * cfg.dx);
}

TEST(HarmonicMap, ConnectivityMismatch) {
  HarmonicMapConfig cfg;
  cfg.s1 = make_icosphere(1);
  cfg.s2 = make_icosphere(2);
  cfg.dx = 0.2;
  try {
    harmonic_map(cfg);
    FAIL() << "expected ConnectivityMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConnectivityMismatch);
  }
}
