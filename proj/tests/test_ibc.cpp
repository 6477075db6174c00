#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "cpm/errors.hpp"
#include "cpm/ibc.hpp"
#include "cpm/mesh.hpp"

using namespace cpm;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Angle difference wrapped to (-pi, pi].
double wrap(double a) {
  while (a <= -kPi) a += 2 * kPi;
  while (a > kPi) a -= 2 * kPi;
  return a;
}

// Side of a point y on the unit circle relative to the point C at angle
// theta_c: the sign of the wrapped angle from C.
int circle_side(const Vec3& y, double theta_c) { return wrap(std::atan2(y.y(), y.x()) - theta_c) > 0 ? 1 : -1; }

std::map<int, double> row_map(const SparseOperator& A, int i) {
  std::map<int, double> m;
  for (int k = A.row_begin(i); k < A.row_end(i); ++k) m[A.cols[k]] += A.vals[k];
  return m;
}

void expect_rows_equal(const std::map<int, double>& got, const std::map<int, double>& want, const std::string& what) {
  ASSERT_EQ(got.size(), want.size()) << what;
  for (const auto& [c, w] : want) {
    const auto it = got.find(c);
    ASSERT_NE(it, got.end()) << what << ": missing column " << c;
    EXPECT_NEAR(it->second, w, 1e-9 * (1 + std::abs(w))) << what << ": column " << c;
  }
}

// Exhaustive check of every rewired row on the unit circle with a point C,
// against side labels from angles alone.
void enumerate_circle_point(const BcSpec& spec) {
  const double theta_c = 1.022 * kPi;
  const Vec3 c_pt(std::cos(theta_c), std::sin(theta_c), 0);
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const auto C = make_point(c_pt, 2);
  const int p = 3;
  const SparseGrid g = build_tube(*S, 0.1, p, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, spec, p);
  const IbcBand& band = sys.ibc->band;
  const SideData& sides = sys.ibc->sides;
  const int n = g.size();
  const double r = g.radius;

  // Band membership and cp_C cache by direct distance.
  for (int i = 0; i < n; ++i) {
    const double d = (g.position(i) - c_pt).norm();
    ASSERT_EQ(band.band_of[i] >= 0, d <= r) << i;
    ASSERT_EQ(band.cached[i] != 0, d < 2 * r) << i;
    if (band.cached[i]) {
      ASSERT_FALSE(sides.oncurve_pt[i]);
    }
  }
  ASSERT_GT(band.size(), 0);
  const auto side = [&](int i) { return circle_side(g.cp[i], theta_c); };
  const auto cached = [&](int i) { return (g.position(i) - c_pt).norm() < 2 * r; };
  const auto twin = [&](int j) {
    EXPECT_GE(band.band_of[j], 0) << "no twin for " << j;
    return n + band.band_of[j];
  };

  const CpmSystem plain = build_plain_system(g, p);
  int twins_used = 0;
  for (int i = 0; i < n; ++i) {
    // PDE E row: same stencil, opposite-side points read from twins.
    std::map<int, double> want_e;
    for (int k = plain.E.row_begin(i); k < plain.E.row_end(i); ++k) {
      const int j = plain.E.cols[k];
      const bool swap = cached(i) && cached(j) && side(j) != side(i);
      twins_used += swap;
      want_e[swap ? twin(j) : j] += plain.E.vals[k];
    }
    expect_rows_equal(row_map(sys.E, i), want_e, "E row " + std::to_string(i));

    // PDE L row: same, missing twins folded into the diagonal.
    std::map<int, double> want_l;
    for (int k = plain.L.row_begin(i); k < plain.L.row_end(i); ++k) {
      const int j = plain.L.cols[k];
      const double w = plain.L.vals[k];
      if (j != i && cached(i) && cached(j) && side(j) != side(i)) {
        if (band.band_of[j] >= 0) {
          want_l[twin(j)] += w;
        } else {
          want_l[i] += w;
        }
      } else {
        want_l[j] += w;
      }
    }
    expect_rows_equal(row_map(sys.L, i), want_l, "L row " + std::to_string(i));
  }
  EXPECT_GT(twins_used, 0);

  for (int k = 0; k < band.size(); ++k) {
    const int i = band.base[k];
    const int alpha = n + k;
    // Band L row: centre -> alpha, across -> PDE id, else twin, else dropped.
    std::map<int, double> want_l;
    for (int q = plain.L.row_begin(i); q < plain.L.row_end(i); ++q) {
      const int j = plain.L.cols[q];
      const double w = plain.L.vals[q];
      if (j == i) {
        want_l[alpha] += w;
      } else if (cached(j) && side(j) != side(i)) {
        want_l[j] += w;
      } else if (band.band_of[j] >= 0) {
        want_l[twin(j)] += w;
      } else {
        want_l[alpha] += w;
      }
    }
    expect_rows_equal(row_map(sys.L, alpha), want_l, "band L row " + std::to_string(k));

    // Band E row: mirror stencil at the reflected query, directed by x_i.
    const Vec3 x = g.position(i);
    const StencilRef st = interp_stencil(g, reflected_query_about_curve(*S, *C, x), p);
    const int dir_side = circle_side(g.cp[i], theta_c);
    std::map<int, double> want_e;
    for (std::size_t q = 0; q < st.dof_ids.size(); ++q) {
      const int j = st.dof_ids[q];
      const bool across_j = cached(j) && side(j) != dir_side;
      want_e[across_j ? j : twin(j)] += -st.weights[q];
    }
    expect_rows_equal(row_map(sys.E, alpha), want_e, "band E row " + std::to_string(k));
    EXPECT_EQ(sys.bc.scale[k], 2.0);
    EXPECT_EQ((sys.bc.point[k] - c_pt).norm(), 0.0);
    if (sides.global) {
      EXPECT_EQ(sides.band_side[k], side(i) > 0 ? SideTag::Plus : SideTag::Minus) << "band side of " << k;
    }
  }
}

OrientationField circle_tangent_at(double theta) {
  return [theta](const Vec3&) { return Vec3(-std::sin(theta), std::cos(theta), 0); };
}

}  // namespace

TEST(Crossing, SymmetricAndStrict) {
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 a(nd(rng), nd(rng), nd(rng)), b(nd(rng), nd(rng), nd(rng));
    EXPECT_EQ(crossing_test(a, b), crossing_test(b, a));
    EXPECT_FALSE(crossing_test(a, a));
    EXPECT_TRUE(crossing_test(a, -a));
  }
  EXPECT_FALSE(crossing_test(Vec3(1, 0, 0), Vec3(0, 1, 0)));
}

TEST(Crossing, GridDirectorsSymmetric) {
  const double theta_c = 1.022 * kPi;
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const auto C = make_point(Vec3(std::cos(theta_c), std::sin(theta_c), 0), 2);
  const SparseGrid g = build_tube(*S, 0.1, 3, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::dirichlet(2), 3);
  const IbcBand& band = sys.ibc->band;
  const SideData& sides = sys.ibc->sides;
  for (int i : band.cached_dofs) {
    for (int j : band.cached_dofs) {
      ASSERT_EQ(across(band, sides, point_director(band, sides, i), j),
                across(band, sides, point_director(band, sides, j), i));
    }
  }
}

TEST(RobustProjection, OrthogonalToFrame) {
  std::mt19937 rng(4);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 n = Vec3(nd(rng), nd(rng), nd(rng)).normalized();
    Vec3 t = Vec3(nd(rng), nd(rng), nd(rng));
    t = (t - t.dot(n) * n).normalized();
    const Vec3 v = 10.0 * Vec3(nd(rng), nd(rng), nd(rng));
    const Vec3 a = robust_project(v, n, &t);
    EXPECT_LE(std::abs(a.dot(n)), 1e-8);
    EXPECT_LE(std::abs(a.dot(t)), 1e-8);
    const Vec3 b = robust_project(v, n, nullptr);
    EXPECT_LE(std::abs(b.dot(n)), 1e-8);
    EXPECT_NEAR((robust_project(b, n, nullptr) - b).norm(), 0.0, 1e-12);
  }
}

TEST(RobustProjection, SideVectorsOnSphereAreOrthogonal) {
  const auto S = make_sphere(Vec3::Zero(), 1.0);
  const auto C = make_circle3(Vec3::Zero(), Vec3::UnitZ(), 1.0);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::dirichlet(2), 2);
  const IbcContext& ctx = *sys.ibc;
  ASSERT_TRUE(ctx.sides.robust);
  for (int i : ctx.band.cached_dofs) {
    const Vec3& v = ctx.sides.v_pt[i];
    EXPECT_LE(std::abs(v.dot(ctx.frames.n_s[i])), 1e-8);
    if (ctx.frames.has_t[i]) {
      EXPECT_LE(std::abs(v.dot(ctx.frames.t_c[i])), 1e-8);
    }
  }
}

TEST(Frames, PlaneAndLine) {
  const auto S = make_plane_square(-1, 1, 3);
  const auto C = make_segment(Vec3(-0.5, 0.05, 0), Vec3(0.5, 0.05, 0), 3);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const IbcBand band = build_ibc_band(g, *S, *C);
  const FrameData f = estimate_frames(g, band, 2, 1);
  int with_t = 0;
  for (int i : band.cached_dofs) {
    const Vec3 x = g.position(i);
    if (std::abs(x.x()) > 0.7 || std::abs(x.y()) > 0.7) continue;
    EXPECT_NEAR(std::abs(f.n_s[i].z()), 1.0, 1e-10);
    if (!f.has_t[i]) continue;
    ++with_t;
    EXPECT_NEAR(std::abs(f.t_c[i].x()), 1.0, 1e-10);
  }
  EXPECT_GT(with_t, 10);
}

TEST(Frames, SphereEquator) {
  const auto S = make_sphere(Vec3::Zero(), 1.0);
  const auto C = make_circle3(Vec3::Zero(), Vec3::UnitZ(), 1.0);
  const SparseGrid g = build_tube(*S, 0.05, 2, 1);
  const IbcBand band = build_ibc_band(g, *S, *C);
  const FrameData f = estimate_frames(g, band, 2, 1);
  double worst_n = 0.0, worst_t = 0.0;
  for (int i : band.cached_dofs) {
    const Vec3& y = band.cp_c[i];
    const Vec3 n = y.normalized();
    const Vec3 t = Vec3(-y.y(), y.x(), 0).normalized();
    worst_n = std::max(worst_n, std::min((f.n_s[i] - n).norm(), (f.n_s[i] + n).norm()));
    // Tangents need cached neighbours on every axis.
    if (band.band_of[i] >= 0 && !g.edge_of_tube[i]) {
      ASSERT_TRUE(f.has_t[i]) << g.position(i).transpose();
    }
    if (!f.has_t[i]) continue;
    worst_t = std::max(worst_t, std::min((f.t_c[i] - t).norm(), (f.t_c[i] + t).norm()));
  }
  EXPECT_LE(worst_n, 1e-2);
  EXPECT_LE(worst_t, 1e-2);
}

TEST(Sides, OnCurveThreshold) {
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const SparseGrid g = build_tube(*S, 0.1, 3, 1);
  const int i = g.find({10, 0, 0});
  ASSERT_GE(i, 0);
  const double tol = 0.1 * g.dx * g.dx;
  for (double factor : {0.999, 1.001}) {
    // Chord length 2 sin(phi / 2) between cp(x_i) = (1, 0) and C.
    const double phi = 2.0 * std::asin(0.5 * factor * tol);
    const auto C = make_point(Vec3(std::cos(phi), std::sin(phi), 0), 2);
    const IbcBand band = build_ibc_band(g, *S, *C);
    const SideData sides = assign_sides(g, band, *C, BcSpec::dirichlet(2), nullptr);
    EXPECT_DOUBLE_EQ(sides.oncurve_tol, tol);
    EXPECT_EQ(sides.oncurve_pt[i] != 0, factor < 1.0) << factor;
  }
}

TEST(Sides, OrientationRequiredForTwoSided) {
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const auto C = make_point(Vec3(1, 0, 0), 2);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  BcSpec spec = BcSpec::dirichlet(2);
  spec.two_sided = true;
  try {
    build_ibc_system(g, S, C, spec, 2);
    FAIL() << "expected OrientationRequired";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OrientationRequired);
  }
}

TEST(Enumeration, CirclePointLocalLabels) { enumerate_circle_point(BcSpec::dirichlet(2)); }

TEST(Enumeration, CirclePointGlobalLabels) {
  enumerate_circle_point(BcSpec::two_sided_dirichlet(2, circle_tangent_at(1.022 * kPi)));
}

TEST(Rewiring, WeightsInvariantAndTwinsColocated) {
  const auto S = make_sphere(Vec3::Zero(), 1.0);
  const auto C = make_circle3(Vec3(0, 0, 0.3), Vec3::UnitZ(), std::sqrt(1 - 0.09));
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const CpmSystem plain = build_plain_system(g, 2);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::neumann(2), 2);
  const int n = g.size();
  const IbcBand& band = sys.ibc->band;
  int rewired = 0;
  for (int i = 0; i < n; ++i) {
    ASSERT_EQ(sys.E.row_end(i) - sys.E.row_begin(i), plain.E.row_end(i) - plain.E.row_begin(i));
    for (int k = 0; k < plain.E.row_end(i) - plain.E.row_begin(i); ++k) {
      const int a = plain.E.row_begin(i) + k, b = sys.E.row_begin(i) + k;
      EXPECT_EQ(sys.E.vals[b], plain.E.vals[a]);
      const int col = sys.E.cols[b];
      if (col != plain.E.cols[a]) {
        ++rewired;
        ASSERT_GE(col, n);
        EXPECT_EQ(band.base[col - n], plain.E.cols[a]);
      }
    }
    double sum = 0.0, ref = 0.0;
    for (int k = sys.L.row_begin(i); k < sys.L.row_end(i); ++k) sum += sys.L.vals[k];
    for (int k = plain.L.row_begin(i); k < plain.L.row_end(i); ++k) ref += plain.L.vals[k];
    EXPECT_NEAR(sum, ref, 1e-9);
  }
  EXPECT_GT(rewired, 0);
  EXPECT_EQ(sys.E.n_rows, band.total());
  EXPECT_EQ(sys.L.n_rows, band.total());
}

TEST(BandRows, EndpointSubsetCopiesPdeRows) {
  const auto S = make_dziuk_surface();
  const auto C = make_arc(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 1.0, -0.75 * kPi, 0.25 * kPi, 3);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::neumann(2), 2);
  const IbcBand& band = sys.ibc->band;
  int subset = 0;
  for (int k = 0; k < band.size(); ++k) {
    if (!band.in_endpoint_subset(k)) continue;
    ++subset;
    const int i = band.base[k];
    const int alpha = band.dof(k);
    expect_rows_equal(row_map(sys.E, alpha), row_map(sys.E, i), "E endpoint row");
    std::map<int, double> want = row_map(sys.L, i);
    const double centre = want[i];
    want.erase(i);
    want[alpha] += centre;
    expect_rows_equal(row_map(sys.L, alpha), want, "L endpoint row");
    EXPECT_EQ(sys.bc.scale[k], 0.0);
  }
  EXPECT_GT(subset, 0);
}

TEST(BandRows, DirichletFirstOrderIsIdentity) {
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const Vec3 c_pt(-1, 0, 0);
  const auto C = make_point(c_pt, 2);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::dirichlet(1), 2);
  const BcValues vals{[](const Vec3&) { return 3.5; }, {}};
  const std::vector<double> e = sys.extension_constants(vals);
  for (int k = 0; k < sys.ibc->band.size(); ++k) {
    const int alpha = sys.n_pde + k;
    EXPECT_EQ(sys.E.row_end(alpha), sys.E.row_begin(alpha));
    EXPECT_EQ(sys.bc.scale[k], 1.0);
    EXPECT_EQ(e[alpha], 3.5);
  }
  for (int i = 0; i < sys.n_pde; ++i) EXPECT_EQ(e[i], 0.0);
}

TEST(Mobius, OneSidedRunNeverQueriesOrientation) {
  const int n_around = 48, n_across = 6;
  const TriangleMesh mesh = make_mobius_mesh(n_around, n_across, 1.0, 0.4);
  std::vector<Vec3> centre;
  for (int i = 0; i < n_around; ++i) centre.push_back(mesh.vertices[i * (n_across + 1) + n_across / 2]);
  const auto S = make_mesh(mesh);
  const auto C = make_polyline(centre, true, 3);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::dirichlet(2), 2);
  EXPECT_FALSE(sys.ibc->sides.global);
  EXPECT_EQ(sys.ibc->sides.orientation_queries, 0u);
  EXPECT_GT(sys.ibc->band.size(), 0);
}

TEST(Baselines, NearestPointMatchesBruteForce) {
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const Vec3 c_pt(std::cos(0.3), std::sin(0.3), 0);
  const auto C = make_point(c_pt, 2);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  int best = -1;
  for (int i = 0; i < g.size(); ++i) {
    if (best < 0 || (g.position(i) - c_pt).norm() < (g.position(best) - c_pt).norm()) best = i;
  }
  EXPECT_EQ(baseline_nearest_point(g, *C), std::vector<int>{best});
  const CpmSystem sys = build_baseline_system(g, *C, BcSpec::dirichlet(1), BaselineMethod::NearestPoint, 2);
  EXPECT_EQ(std::count(sys.fixed.begin(), sys.fixed.end(), 1), 1);
  EXPECT_EQ(sys.fixed[best], 1);
  EXPECT_NEAR((sys.fixed_point[best] - c_pt).norm(), 0.0, 1e-14);
}

TEST(Baselines, BallMatchesBruteForce) {
  const auto S = make_sphere(Vec3::Zero(), 1.0);
  const auto C = make_circle3(Vec3::Zero(), Vec3::UnitZ(), 1.0);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const double radius = g.radius;
  std::vector<int> want;
  for (int i = 0; i < g.size(); ++i) {
    const Vec3 x = g.position(i);
    const double d = std::hypot(std::hypot(x.x(), x.y()) - 1.0, x.z());
    if (d <= radius) want.push_back(i);
  }
  EXPECT_EQ(baseline_ball(g, *C, radius), want);
}

TEST(Baselines, TwoSidedUnsupported) {
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const auto C = make_point(Vec3(1, 0, 0), 2);
  const SparseGrid g = build_tube(*S, 0.1, 2, 1);
  const BcSpec spec = BcSpec::two_sided_dirichlet(1, circle_tangent_at(0.0));
  try {
    build_baseline_system(g, *C, spec, BaselineMethod::Ball, 2);
    FAIL() << "expected TwoSidedUnsupported";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TwoSidedUnsupported);
  }
}

TEST(Interpolation, TargetsReadTheirOwnSide) {
  // PDE DOFs hold their own side (+1/-1) and band DOFs the opposite one, so a
  // target that reads consistently from its side of C sees exactly its sign.
  const double theta_c = 1.022 * kPi;
  const auto S = make_circle(Vec3::Zero(), 1.0);
  const auto C = make_point(Vec3(std::cos(theta_c), std::sin(theta_c), 0), 2);
  const SparseGrid g = build_tube(*S, 0.1, 3, 1);
  const CpmSystem sys = build_ibc_system(g, S, C, BcSpec::dirichlet(2), 3);
  std::vector<double> u(sys.n_total);
  for (int i = 0; i < sys.n_pde; ++i) u[i] = circle_side(g.cp[i], theta_c);
  for (int k = 0; k < sys.ibc->band.size(); ++k) u[sys.n_pde + k] = -u[sys.ibc->band.base[k]];
  std::vector<Vec3> targets;
  std::vector<double> want;
  for (int k = -20; k <= 20; ++k) {
    if (k == 0) continue;
    const double t = theta_c + 0.01 * k;
    targets.emplace_back(std::cos(t), std::sin(t), 0);
    want.push_back(k > 0 ? 1.0 : -1.0);
  }
  const std::vector<double> v = interpolate_at_ibc(sys, u, targets);
  for (std::size_t t = 0; t < v.size(); ++t) EXPECT_NEAR(v[t], want[t], 1e-12) << t;
}
