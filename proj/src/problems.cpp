#include "cpm/problems.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "cpm/discretize.hpp"
#include "cpm/errors.hpp"

namespace cpm {

namespace {

constexpr double kPi = 3.14159265358979323846;

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int band_size(const CpmSystem& sys) { return sys.n_total - sys.n_pde; }

// PDE right-hand side extended to band rows from the colocated grid point.
std::vector<double> with_band_rows(const CpmSystem& sys, std::vector<double> f) {
  f.resize(sys.n_total);
  for (int k = 0; k < band_size(sys); ++k) f[sys.n_pde + k] = f[sys.band_base(k)];
  return f;
}

BcSpec with_order(BcSpec spec, IbcMethod method) {
  spec.order = method == IbcMethod::Order2 ? 2 : 1;
  return spec;
}

void require_converged(const SolveStats& st, const char* what) {
  if (st.converged) return;
  std::ostringstream msg;
  msg << what << ": BiCGSTAB stopped after " << st.iterations << " iterations at relative residual " << st.residual;
  fail(ErrorCode::NotConverged, msg.str());
}

// Values at PDE DOFs of a field seen through the (rewired) extension rows.
std::vector<double> surface_field(const CpmSystem& sys, std::span<const double> u) {
  return sys.surface_values(u, {});
}

void finish_result(ProblemResult& r, const SparseGrid& grid, const CpmSystem& sys, std::span<const double> u,
                   const std::function<double(const Vec3&)>& exact) {
  r.points = grid.cp;
  r.values = surface_field(sys, u);
  r.exact.resize(grid.size());
  for (int i = 0; i < grid.size(); ++i) r.exact[i] = exact(grid.cp[i]);
  r.error = error_norms(r.values, r.exact);
  r.n_pde = sys.n_pde;
  r.n_band = band_size(sys);
}

bool use_direct(int n, int cap) { return n <= cap; }

}  // namespace

const char* method_name(IbcMethod m) {
  switch (m) {
    case IbcMethod::Order1: return "order1";
    case IbcMethod::Order2: return "order2";
    case IbcMethod::Nearest: return "nearest";
    case IbcMethod::Ball: return "ball";
  }
  return "?";
}

IbcMethod parse_method(const std::string& s) {
  if (s == "order1") return IbcMethod::Order1;
  if (s == "order2") return IbcMethod::Order2;
  if (s == "nearest") return IbcMethod::Nearest;
  if (s == "ball") return IbcMethod::Ball;
  fail(ErrorCode::InvalidConfig, "unknown ibc method '" + s + "'");
}

ErrorNorms error_norms(std::span<const double> values, std::span<const double> exact) {
  ErrorNorms e;
  if (values.size() != exact.size()) fail(ErrorCode::DimensionMismatch, "error_norms: length mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = std::abs(values[i] - exact[i]);
    e.max = std::max(e.max, d);
    sq += d * d;
  }
  e.rms = values.empty() ? 0.0 : std::sqrt(sq / values.size());
  return e;
}

CpmSystem build_system(const SparseGrid& grid, SurfacePtr surface, SurfacePtr curve, IbcMethod method,
                       const BcSpec& spec, int p) {
  switch (method) {
    case IbcMethod::Order1:
    case IbcMethod::Order2:
      return build_ibc_system(grid, surface, curve, with_order(spec, method), p);
    case IbcMethod::Nearest:
      return build_baseline_system(grid, *curve, spec, BaselineMethod::NearestPoint, p);
    case IbcMethod::Ball:
      return build_baseline_system(grid, *curve, spec, BaselineMethod::Ball, p);
  }
  fail(ErrorCode::InvalidConfig, "unknown ibc method");
}

SolveStats solve_system(const CpmSystem& sys, double m, double n, std::span<const double> f,
                        std::span<const double> e, std::span<const double> fixed_values, std::span<double> u,
                        const SolverConfig& cfg, bool direct) {
  const OperatorSpec spec{m, n, &sys.E, &sys.L, &sys.fixed};
  const SystemOperator A(spec);
  const std::vector<double> rhs = effective_rhs(A, f, e, fixed_values);
  if (direct) {
    SolveStats st;
    const std::vector<double> x = direct_solve_small(spec, rhs, std::numeric_limits<int>::max(), &st);
    std::copy(x.begin(), x.end(), u.begin());
    return st;
  }
  return bicgstab(A, rhs, u, cfg);
}

// ---------------------------------------------------------------------------
// Poisson on the unit circle

double poisson_circle_exact(double theta, double theta_c, bool two_sided) {
  double s = std::fmod(theta - theta_c, 2.0 * kPi);
  if (s < 0.0) s += 2.0 * kPi;
  if (!two_sided) return 2.0 * std::cos(s) + std::sin(s);
  return 2.0 * std::cos(s) + (10.0 / kPi) * s;
}

ProblemResult solve_poisson_circle(const PoissonCircleConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const SurfacePtr S = make_circle(Vec3::Zero(), 1.0);
  const Vec3 c(std::cos(cfg.theta_c), std::sin(cfg.theta_c), 0.0);
  const SurfacePtr C = make_point(c, 2);
  const SparseGrid grid = build_tube(*S, cfg.dx, cfg.p, 1);

  BcSpec spec = BcSpec::dirichlet(1);
  BcValues g;
  if (cfg.two_sided) {
    // Plus is the counter-clockwise side of C, where u -> 2.
    const Vec3 tangent(-std::sin(cfg.theta_c), std::cos(cfg.theta_c), 0.0);
    spec = BcSpec::two_sided_dirichlet(1, [tangent](const Vec3&) { return tangent; });
    g.plus = [](const Vec3&) { return 2.0; };
    g.minus = [](const Vec3&) { return 22.0; };
  } else {
    g.plus = [](const Vec3&) { return 2.0; };
  }
  const CpmSystem sys = build_system(grid, S, C, cfg.method, spec, cfg.p);

  // A = M with right-hand side -f for -u'' = f. Two-sided: f = 2 cos(s);
  // one-sided: f = u = 2 cos(s) + sin(s), s = theta - theta_c.
  std::vector<double> f(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const double s = std::atan2(grid.cp[i].y(), grid.cp[i].x()) - cfg.theta_c;
    f[i] = -2.0 * std::cos(s) - (cfg.two_sided ? 0.0 : std::sin(s));
  }
  f = with_band_rows(sys, std::move(f));
  const std::vector<double> e = sys.extension_constants(g);
  const std::vector<double> fixed = sys.fixed_values(g);
  std::vector<double> u(sys.n_total, 0.0);
  ProblemResult r;
  r.stats.push_back(solve_system(sys, 0.0, 1.0, f, e, fixed, u, {}, true));
  const double th_c = cfg.theta_c;
  const bool two = cfg.two_sided;
  finish_result(r, grid, sys, u, [&](const Vec3& y) { return poisson_circle_exact(std::atan2(y.y(), y.x()), th_c, two); });
  r.seconds = elapsed(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Heat equation on the unit sphere

SurfacePtr heat_sphere_curve(BcKind kind) {
  if (kind == BcKind::ZeroNeumann) {
    // Great circle through the poles: the conormal is horizontal, so
    // d/db (exp(-2t) z) = 0 on C.
    return make_circle3(Vec3::Zero(), Vec3(std::cos(0.3), std::sin(0.3), 0.0), 1.0);
  }
  const Vec3 n = Vec3(0.3, 0.2, 1.0).normalized();
  const double h = 0.3;
  return make_circle3(h * n, n, std::sqrt(1.0 - h * h));
}

ProblemResult run_heat(const HeatSphereConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const SurfacePtr S = make_sphere(Vec3::Zero(), 1.0);
  const SurfacePtr C = heat_sphere_curve(cfg.kind);
  const SparseGrid grid = build_tube(*S, cfg.dx, cfg.p, 1);
  const BcSpec spec = cfg.kind == BcKind::Dirichlet ? BcSpec::dirichlet(1) : BcSpec::neumann(1);
  const CpmSystem sys = build_system(grid, S, C, cfg.method, spec, cfg.p);

  const int steps = std::max(1, static_cast<int>(std::lround(cfg.t_end / (cfg.dt_factor * cfg.dx))));
  const double dt = cfg.t_end / steps;
  const auto exact = [](const Vec3& y, double t) { return std::exp(-2.0 * t) * y.z(); };
  const auto values_at = [&](double t) {
    BcValues g;
    g.plus = [t, exact](const Vec3& y) { return exact(y, t); };
    return g;
  };

  const OperatorSpec op{1.0, -0.5 * dt, &sys.E, &sys.L, &sys.fixed};
  const SystemOperator A(op);
  std::vector<double> u(sys.n_total);
  for (int i = 0; i < sys.n_pde; ++i) u[i] = exact(grid.cp[i], 0.0);
  for (int k = 0; k < band_size(sys); ++k) u[sys.n_pde + k] = exact(grid.cp[sys.band_base(k)], 0.0);

  ProblemResult r;
  std::vector<double> e_now = sys.extension_constants(values_at(0.0));
  for (int step = 0; step < steps; ++step) {
    const double t1 = (step + 1) * dt;
    const std::vector<double> e_next = sys.extension_constants(values_at(t1));
    // u + dt/2 (M_lin u + offdiag(L) e^k); the e^{k+1} term is added by effective_rhs.
    std::vector<double> f = A.apply_m(u);
    const std::vector<double> oe = A.apply_offdiag(e_now);
    for (int i = 0; i < sys.n_total; ++i) f[i] = u[i] + 0.5 * dt * (f[i] + oe[i]);
    const std::vector<double> fixed = sys.fixed_values(values_at(t1));
    const std::vector<double> rhs = effective_rhs(A, f, e_next, fixed);
    const SolveStats st = bicgstab(A, rhs, u, cfg.solver);
    require_converged(st, "heat step");
    r.stats.push_back(st);
    e_now = e_next;
  }
  finish_result(r, grid, sys, u, [&](const Vec3& y) { return exact(y, cfg.t_end); });
  r.seconds = elapsed(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Screened Poisson on the Dziuk surface

SurfacePtr dziuk_curve(bool open) {
  if (!open) return make_circle3(Vec3::Zero(), Vec3::UnitZ(), 1.0);
  return make_arc(Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY(), 1.0, -0.75 * kPi, 0.25 * kPi, 3);
}

ProblemResult solve_screened_poisson_dziuk(const DziukConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const SurfacePtr S = make_dziuk_surface();
  const SurfacePtr C = dziuk_curve(cfg.open);
  const SparseGrid grid = build_tube(*S, cfg.dx, cfg.p, 1);
  const BcSpec spec = cfg.kind == BcKind::Dirichlet ? BcSpec::dirichlet(1) : BcSpec::neumann(1);
  const CpmSystem sys = build_system(grid, S, C, cfg.method, spec, cfg.p);
  const auto exact = [](const Vec3& y) { return y.x() * y.y(); };
  BcValues g;
  g.plus = exact;

  // -Delta u + c u = f  as  (c I - M) u = f.
  std::vector<double> f(grid.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < grid.size(); ++i) f[i] = manufactured_rhs_dziuk(grid.cp[i], cfg.c);
  f = with_band_rows(sys, std::move(f));
  const std::vector<double> e = sys.extension_constants(g);
  const std::vector<double> fixed = sys.fixed_values(g);
  std::vector<double> u(sys.n_total, 0.0);
  ProblemResult r;
  const SolveStats st = solve_system(sys, cfg.c, -1.0, f, e, fixed, u, cfg.solver, false);
  require_converged(st, "screened Poisson");
  r.stats.push_back(st);
  finish_result(r, grid, sys, u, exact);
  r.seconds = elapsed(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Geodesic distance (heat method)

GeodesicResult geodesic_distance(const GeodesicConfig& cfg) {
  if (!cfg.surface || !cfg.curve) fail(ErrorCode::InvalidConfig, "geodesic: surface and source are required");
  if (!(cfg.m > 0.0)) fail(ErrorCode::InvalidConfig, "geodesic: time-step factor m must be positive");
  const SparseGrid grid = build_tube(*cfg.surface, cfg.dx, cfg.p, cfg.q, cfg.seeds);
  const CpmSystem sys = build_ibc_system(grid, cfg.surface, cfg.curve, BcSpec::dirichlet(1), cfg.p);
  const IbcBand& band = sys.ibc->band;
  const int n = sys.n_pde;
  const bool step1_direct = cfg.m == 1.0;
  if (step1_direct && sys.n_total > cfg.direct_cap) {
    std::ostringstream msg;
    msg << "heat-method step 1 with m = 1 needs the direct solver, but the system has " << sys.n_total
        << " unknowns (cap " << cfg.direct_cap << "); use the smoothed mode m >= 100";
    fail(ErrorCode::Step1SolverPolicy, msg.str());
  }
  GeodesicResult out;
  out.n_pde = n;
  out.n_band = band_size(sys);

  // Step 1: smoothed source, implicit Euler with dt = m dx^2.
  const double k = std::atanh(1.0 - cfg.dx) / grid.radius;
  std::vector<double> f(sys.n_total, 0.0);
  for (int i : band.cached_dofs) f[i] = 0.5 * std::tanh(-k * (grid.cp[i] - band.cp_c[i]).norm()) + 0.5;
  for (int a = n; a < sys.n_total; ++a) f[a] = 1.0;
  BcValues one;
  one.plus = [](const Vec3&) { return 1.0; };
  const double dt = cfg.m * cfg.dx * cfg.dx;
  std::vector<double> v = f;
  SolveStats st = solve_system(sys, 1.0, -dt, f, sys.extension_constants(one), {}, v, cfg.solver, step1_direct);
  require_converged(st, "heat-method step 1");
  out.stats.push_back(st);

  const SparseOperator E_plain = build_extension(grid, cfg.p);
  const TangentFrames frames = tangent_frames(grid, E_plain);
  const bool direct3 = use_direct(sys.n_total, cfg.direct_cap);

  // Steps 2 and 3, then extra passes with X = grad(phi) / |grad(phi)|.
  std::vector<double> phi(sys.n_total, 0.0);
  for (int pass = 0; pass <= cfg.extra_passes; ++pass) {
    const std::vector<double> w = surface_field(sys, pass == 0 ? v : phi);
    std::vector<Vec3> X = surface_gradient_normalized(grid, w, frames);
    if (pass == 0) {
      for (Vec3& x : X) x = -x;
    }
    // Re-extend componentwise.
    std::vector<Vec3> Xe(n, Vec3::Zero());
    std::vector<double> comp(n), ext(n);
    for (int c = 0; c < grid.dim; ++c) {
      for (int i = 0; i < n; ++i) comp[i] = X[i][c];
      E_plain.multiply(comp, ext);
      for (int i = 0; i < n; ++i) Xe[i][c] = ext[i];
    }
    std::vector<double> div = divergence_centered(grid, Xe);
    div = with_band_rows(sys, std::move(div));
    st = solve_system(sys, 0.0, 1.0, div, {}, {}, phi, cfg.solver, direct3);
    require_converged(st, "heat-method Poisson step");
    out.stats.push_back(st);
  }

  const std::vector<double> w = surface_field(sys, phi);
  const std::vector<Vec3> samples = cfg.curve->sample(0.5 * cfg.dx);
  const std::vector<double> on_c = interpolate_at_ibc(sys, phi, samples);
  out.shift = *std::min_element(on_c.begin(), on_c.end());
  out.points = grid.cp;
  out.distance.resize(n);
  for (int i = 0; i < n; ++i) out.distance[i] = w[i] - out.shift;
  return out;
}

// ---------------------------------------------------------------------------
// Diffusion curves

ChannelResult diffusion_curves(const DiffusionCurvesConfig& cfg) {
  if (!cfg.surface || !cfg.curve) fail(ErrorCode::InvalidConfig, "diffusion curves: surface and curve are required");
  if (cfg.channels.empty()) fail(ErrorCode::InvalidConfig, "diffusion curves: at least one channel is required");
  if (cfg.spec.plus_kind == BcKind::ZeroNeumann && cfg.spec.minus_kind == BcKind::ZeroNeumann) {
    fail(ErrorCode::InvalidConfig, "diffusion curves need a Dirichlet side; pure Neumann leaves the solution undetermined");
  }
  const SparseGrid grid = build_tube(*cfg.surface, cfg.dx, cfg.p, cfg.q, cfg.seeds);
  const CpmSystem sys = build_ibc_system(grid, cfg.surface, cfg.curve, cfg.spec, cfg.p);
  ChannelResult out;
  out.points = grid.cp;
  out.n_pde = sys.n_pde;
  out.n_band = band_size(sys);
  const bool direct = use_direct(sys.n_total, 20000);
  const std::vector<double> zero(sys.n_total, 0.0);
  for (const BcValues& g : cfg.channels) {
    std::vector<double> u(sys.n_total, 0.0);
    const SolveStats st = solve_system(sys, 0.0, 1.0, zero, sys.extension_constants(g), {}, u, cfg.solver, direct);
    require_converged(st, "diffusion curves");
    out.stats.push_back(st);
    out.channels.push_back(surface_field(sys, u));
    out.grid.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vector field design

VfdResult vector_field_design(const VfdConfig& cfg) {
  if (!cfg.surface || !cfg.curve || !cfg.plus) fail(ErrorCode::InvalidConfig, "vfd: surface, curve and direction are required");
  const SparseGrid grid = build_tube(*cfg.surface, cfg.dx, cfg.p, cfg.q, cfg.seeds);
  const CpmSystem sys = build_ibc_system(grid, cfg.surface, cfg.curve, cfg.spec, cfg.p);
  const TangentFrames frames = tangent_frames(grid, build_extension(grid, cfg.p));
  const int n = sys.n_pde, nt = sys.n_total;
  const double dt = cfg.dt_factor * cfg.dx;

  std::array<BcValues, 3> g;
  std::array<std::vector<double>, 3> e;
  for (int c = 0; c < 3; ++c) {
    g[c].plus = [f = cfg.plus, c](const Vec3& y) { return f(y)[c]; };
    if (cfg.minus) g[c].minus = [f = cfg.minus, c](const Vec3& y) { return f(y)[c]; };
    e[c] = sys.extension_constants(g[c]);
  }
  // Zero field, with the band DOFs holding the prescribed directions.
  std::array<std::vector<double>, 3> u;
  for (int c = 0; c < 3; ++c) {
    u[c].assign(nt, 0.0);
    for (int k = 0; k < nt - n; ++k) u[c][n + k] = g[c].at(sys.bc.point[k], sys.bc.serving[k]);
  }

  const OperatorSpec op{1.0, -dt, &sys.E, &sys.L, &sys.fixed};
  const SystemOperator A(op);
  VfdResult out;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int c = 0; c < 3; ++c) {
      const std::vector<double> rhs = effective_rhs(A, u[c], e[c]);
      const SolveStats st = bicgstab(A, rhs, u[c], cfg.solver);
      require_converged(st, "vfd heat step");
      out.stats.push_back(st);
    }
    for (int i = 0; i < n; ++i) {
      Vec3 w(u[0][i], u[1][i], u[2][i]);
      const Vec3& nn = frames.normal[i];
      w -= w.dot(nn) * nn;
      for (int c = 0; c < 3; ++c) u[c][i] = w[c];
    }
  }
  out.points = grid.cp;
  out.normal = frames.normal;
  out.field.resize(n);
  for (int i = 0; i < n; ++i) out.field[i] = Vec3(u[0][i], u[1][i], u[2][i]);
  out.n_pde = n;
  out.n_band = band_size(sys);
  return out;
}

// ---------------------------------------------------------------------------
// Harmonic maps

HarmonicMapResult harmonic_map(const HarmonicMapConfig& cfg) {
  if (cfg.s1.triangles != cfg.s2.triangles || cfg.s1.vertices.size() != cfg.s2.vertices.size()) {
    fail(ErrorCode::ConnectivityMismatch, "harmonic map: S1 and S2 must share vertex count and triangles");
  }
  const auto S1 = make_mesh(cfg.s1);
  const auto S2 = make_mesh(cfg.s2);
  const SparseGrid grid = build_tube(*S1, cfg.dx, cfg.p, cfg.q);
  CpmSystem sys = cfg.landmark ? build_ibc_system(grid, S1, cfg.landmark, BcSpec::dirichlet(1), cfg.p)
                               : build_plain_system(grid, cfg.p);
  const int n = sys.n_pde, nt = sys.n_total;

  std::array<std::vector<double>, 3> e;
  for (int c = 0; c < 3; ++c) {
    if (!cfg.landmark) {
      e[c].assign(nt, 0.0);
      continue;
    }
    BcValues g;
    g.plus = [f = cfg.landmark_map, c](const Vec3& y) { return f(y)[c]; };
    e[c] = sys.extension_constants(g);
  }

  // Initial map through barycentric coordinates on the shared connectivity.
  std::vector<Vec3> u(nt);
  for (int i = 0; i < n; ++i) {
    const MeshCp mc = S1->closest_point_detailed(grid.position(i));
    const auto& tri = cfg.s1.triangles[mc.triangle];
    u[i] = mc.bary[0] * cfg.s2.vertices[tri[0]] + mc.bary[1] * cfg.s2.vertices[tri[1]] +
           mc.bary[2] * cfg.s2.vertices[tri[2]];
  }
  for (int k = 0; k < nt - n; ++k) u[n + k] = u[sys.band_base(k)];
  if (cfg.noise > 0.0) {
    std::mt19937 rng(cfg.seed);
    std::uniform_real_distribution<double> dist(-cfg.noise, cfg.noise);
    for (int i = 0; i < nt; ++i) {
      const MeshCp mc = S2->closest_point_detailed(u[i]);
      const auto& tri = cfg.s2.triangles[mc.triangle];
      const Vec3 nrm = (cfg.s2.vertices[tri[1]] - cfg.s2.vertices[tri[0]])
                           .cross(cfg.s2.vertices[tri[2]] - cfg.s2.vertices[tri[0]])
                           .normalized();
      Vec3 d(dist(rng), dist(rng), dist(rng));
      d -= d.dot(nrm) * nrm;
      u[i] += d;
    }
  }
  for (Vec3& x : u) x = S2->closest_point(x).cp;

  HarmonicMapResult out;
  out.initial.assign(u.begin(), u.begin() + n);
  const OperatorSpec op{0.0, 1.0, &sys.E, &sys.L, &sys.fixed};
  const SystemOperator A(op);
  const double dt = cfg.dt_factor * cfg.dx * cfg.dx;
  std::vector<double> comp(nt);
  std::vector<Vec3> v(nt);
  for (int step = 0; step < cfg.steps; ++step) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < nt; ++i) comp[i] = u[i][c];
      const std::vector<double> mu = A.apply_m(comp);
      const std::vector<double> oe = A.apply_offdiag(e[c]);
      for (int i = 0; i < nt; ++i) v[i][c] = comp[i] + dt * (mu[i] + oe[i]);
    }
    double disp = 0.0;
#pragma omp parallel for schedule(static) reduction(max : disp)
    for (int i = 0; i < nt; ++i) {
      const Vec3 next = S2->closest_point(v[i]).cp;
      if (i < n) disp = std::max(disp, (next - u[i]).norm());
      u[i] = next;
    }
    out.step_displacement.push_back(disp);
  }

  out.points = grid.cp;
  out.map.assign(u.begin(), u.begin() + n);
  out.n_pde = n;
  out.n_band = nt - n;
  // Map at the S1 vertices: interpolate each component, then project.
  std::array<std::vector<double>, 3> at_v;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < nt; ++i) comp[i] = u[i][c];
    at_v[c] = cfg.landmark ? interpolate_at_ibc(sys, comp, cfg.s1.vertices)
                           : interpolate_at(grid, comp, cfg.s1.vertices, cfg.p);
  }
  out.vertex_map.resize(cfg.s1.vertices.size());
  for (std::size_t j = 0; j < out.vertex_map.size(); ++j) {
    out.vertex_map[j] = S2->closest_point(Vec3(at_v[0][j], at_v[1][j], at_v[2][j])).cp;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence

const char* problem_name(ProblemId id) {
  switch (id) {
    case ProblemId::PoissonCircle: return "poisson-circle";
    case ProblemId::PoissonCircleOneSided: return "poisson-circle-onesided";
    case ProblemId::HeatDirichlet: return "heat-dirichlet";
    case ProblemId::HeatNeumann: return "heat-neumann";
    case ProblemId::DziukClosed: return "dziuk-closed";
    case ProblemId::DziukOpen: return "dziuk-open";
    case ProblemId::DziukDirichlet: return "dziuk-dirichlet";
  }
  return "?";
}

ProblemId parse_problem(const std::string& s) {
  for (ProblemId id : {ProblemId::PoissonCircle, ProblemId::PoissonCircleOneSided, ProblemId::HeatDirichlet,
                       ProblemId::HeatNeumann, ProblemId::DziukClosed, ProblemId::DziukOpen,
                       ProblemId::DziukDirichlet}) {
    if (s == problem_name(id)) return id;
  }
  fail(ErrorCode::InvalidConfig, "unknown problem '" + s + "'");
}

ProblemResult run_problem(ProblemId id, double dx, IbcMethod method, const SolverConfig& solver) {
  switch (id) {
    case ProblemId::PoissonCircle:
    case ProblemId::PoissonCircleOneSided: {
      PoissonCircleConfig c;
      c.dx = dx;
      c.method = method;
      c.two_sided = id == ProblemId::PoissonCircle;
      return solve_poisson_circle(c);
    }
    case ProblemId::HeatDirichlet:
    case ProblemId::HeatNeumann: {
      HeatSphereConfig c;
      c.dx = dx;
      c.method = method;
      c.kind = id == ProblemId::HeatDirichlet ? BcKind::Dirichlet : BcKind::ZeroNeumann;
      c.solver = solver;
      return run_heat(c);
    }
    case ProblemId::DziukClosed:
    case ProblemId::DziukOpen:
    case ProblemId::DziukDirichlet: {
      DziukConfig c;
      c.dx = dx;
      c.method = method;
      c.open = id == ProblemId::DziukOpen;
      c.kind = id == ProblemId::DziukDirichlet ? BcKind::Dirichlet : BcKind::ZeroNeumann;
      c.solver = solver;
      return solve_screened_poisson_dziuk(c);
    }
  }
  fail(ErrorCode::InvalidConfig, "unknown problem");
}

double fit_slope(std::span<const double> dx, std::span<const double> err) {
  const std::size_t n = dx.size();
  if (n < 2 || err.size() != n) fail(ErrorCode::InvalidConfig, "slope fit needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(dx[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ConvergenceReport convergence_harness(ProblemId id, const std::vector<double>& dxs, IbcMethod method,
                                      const SolverConfig& solver) {
  ConvergenceReport rep;
  std::vector<double> errs;
  for (double dx : dxs) {
    const ProblemResult r = run_problem(id, dx, method, solver);
    ConvergenceRow row;
    row.dx = dx;
    row.error = r.error.max;
    row.rms = r.error.rms;
    row.n_pde = r.n_pde;
    row.seconds = r.seconds;
    row.order = rep.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : std::log(rep.rows.back().error / row.error) / std::log(rep.rows.back().dx / dx);
    rep.rows.push_back(row);
    errs.push_back(row.error);
  }
  if (dxs.size() >= 2) rep.slope = fit_slope(dxs, errs);
  return rep;
}

void write_convergence_csv(const ConvergenceReport& report, std::ostream& out) {
  // Shortest representation that reads back to the same double.
  const auto put = [&out](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
  };
  out << "dx,error,order\n";
  for (const ConvergenceRow& r : report.rows) {
    put(r.dx);
    out << ',';
    put(r.error);
    out << ',';
    if (!std::isnan(r.order)) put(r.order);
    out << '\n';
  }
}

}  // namespace cpm
