#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cpm/ibc.hpp"
#include "cpm/mesh.hpp"
#include "cpm/solver.hpp"
#include "cpm/surface.hpp"
#include "cpm/tube_grid.hpp"

namespace cpm {

/// How the interior condition is imposed.
enum class IbcMethod { Order1, Order2, Nearest, Ball };

const char* method_name(IbcMethod m);
IbcMethod parse_method(const std::string& name);

struct ErrorNorms {
  double max = 0.0;
  double rms = 0.0;
};

ErrorNorms error_norms(std::span<const double> values, std::span<const double> exact);

/// Solution sampled at cp_S of every PDE DOF.
struct ProblemResult {
  std::vector<Vec3> points;
  std::vector<double> values;
  std::vector<double> exact;
  ErrorNorms error;
  std::vector<SolveStats> stats;
  int n_pde = 0;
  int n_band = 0;
  double seconds = 0.0;
};

/// Operators for one of the four methods on a given grid.
CpmSystem build_system(const SparseGrid& grid, SurfacePtr surface, SurfacePtr curve, IbcMethod method,
                       const BcSpec& spec, int p);

/// Solves A u = f - n offdiag(L) e with BiCGSTAB, or SparseLU when `direct`.
/// `u` is the initial guess on entry.
SolveStats solve_system(const CpmSystem& sys, double m, double n, std::span<const double> f,
                        std::span<const double> e, std::span<const double> fixed_values, std::span<double> u,
                        const SolverConfig& cfg, bool direct);

// Discontinuous Poisson on the unit circle with a point condition at theta_c.
struct PoissonCircleConfig {
  double dx = 0.1;
  int p = 3;
  IbcMethod method = IbcMethod::Order2;
  /// Values 2 and 22 on the two sides; otherwise the smooth one-sided variant
  /// with u = 2 cos(s) + sin(s), s = theta - theta_c, and u = 2 on C.
  bool two_sided = true;
  double theta_c = 1.022 * 3.14159265358979323846;
};
double poisson_circle_exact(double theta, double theta_c, bool two_sided);
ProblemResult solve_poisson_circle(const PoissonCircleConfig& cfg);

// Heat equation on the unit sphere with exact solution exp(-2t) z.
struct HeatSphereConfig {
  double dx = 0.2;
  int p = 3;
  IbcMethod method = IbcMethod::Order2;
  BcKind kind = BcKind::Dirichlet;
  double t_end = 0.1;
  double dt_factor = 0.1;  // dt = dt_factor * dx
  SolverConfig solver;
};
/// Plane-sphere intersection used as C for each boundary kind.
SurfacePtr heat_sphere_curve(BcKind kind);
ProblemResult run_heat(const HeatSphereConfig& cfg);

// -Delta_S u + c u = f on the Dziuk surface with exact u = x1 x2.
struct DziukConfig {
  double dx = 0.1;
  int p = 3;
  IbcMethod method = IbcMethod::Order2;
  BcKind kind = BcKind::ZeroNeumann;
  bool open = false;  // arc theta in [-3pi/4, pi/4] instead of the full circle
  double c = 1.0;
  SolverConfig solver;
};
SurfacePtr dziuk_curve(bool open);
ProblemResult solve_screened_poisson_dziuk(const DziukConfig& cfg);

// Heat-method geodesic distance from a point or curve source.
struct GeodesicConfig {
  SurfacePtr surface;
  SurfacePtr curve;
  double dx = 0.05;
  int p = 2;
  int q = 1;
  /// dt = m dx^2. m = 1 goes through the direct solver.
  double m = 100.0;
  int extra_passes = 2;
  int direct_cap = 20000;
  SolverConfig solver;
  std::vector<Vec3> seeds;
};
struct GeodesicResult {
  std::vector<Vec3> points;
  std::vector<double> distance;
  std::vector<SolveStats> stats;
  int n_pde = 0;
  int n_band = 0;
  double shift = 0.0;
};
GeodesicResult geodesic_distance(const GeodesicConfig& cfg);

// Laplace solves per colour channel with interior conditions on C.
struct DiffusionCurvesConfig {
  SurfacePtr surface;
  SurfacePtr curve;
  BcSpec spec;
  std::vector<BcValues> channels;
  double dx = 0.05;
  int p = 2;
  int q = 1;
  SolverConfig solver;
  std::vector<Vec3> seeds;
};
struct ChannelResult {
  std::vector<Vec3> points;
  std::vector<std::vector<double>> channels;  // surface values per channel
  std::vector<std::vector<double>> grid;      // raw DOF values per channel
  std::vector<SolveStats> stats;
  int n_pde = 0;
  int n_band = 0;
};
ChannelResult diffusion_curves(const DiffusionCurvesConfig& cfg);

// Tangent vector field design by repeated heat steps and projection.
struct VfdConfig {
  SurfacePtr surface;
  SurfacePtr curve;
  BcSpec spec;
  /// Prescribed direction per side of C (minus defaults to plus).
  std::function<Vec3(const Vec3&)> plus;
  std::function<Vec3(const Vec3&)> minus;
  double dx = 0.05;
  int p = 2;
  int q = 1;
  int iterations = 10;
  double dt_factor = 0.1;  // dt = dt_factor * dx
  SolverConfig solver;
  std::vector<Vec3> seeds;
};
struct VfdResult {
  std::vector<Vec3> points;
  std::vector<Vec3> field;  // per PDE DOF, after the last projection
  std::vector<Vec3> normal;
  std::vector<SolveStats> stats;
  int n_pde = 0;
  int n_band = 0;
};
VfdResult vector_field_design(const VfdConfig& cfg);

// Harmonic map S1 -> S2 by explicit gradient flow and projection onto S2.
struct HarmonicMapConfig {
  TriangleMesh s1;
  TriangleMesh s2;
  /// Optional landmark curve on S1 and its image map g: C1 -> S2.
  SurfacePtr landmark;
  std::function<Vec3(const Vec3&)> landmark_map;
  double dx = 0.05;
  int p = 2;
  int q = 1;
  int steps = 200;
  double dt_factor = 0.1;  // dt = dt_factor * dx^2
  double noise = 0.0;      // uniform tangent perturbation of the initial map
  unsigned seed = 1;
};
struct HarmonicMapResult {
  std::vector<Vec3> points;        // cp on S1
  std::vector<Vec3> map;           // image on S2 per PDE DOF
  std::vector<Vec3> initial;       // initial map
  std::vector<double> step_displacement;  // max |u^{k+1} - u^k| per step
  std::vector<Vec3> vertex_map;    // image of every S1 vertex
  int n_pde = 0;
  int n_band = 0;
};
HarmonicMapResult harmonic_map(const HarmonicMapConfig& cfg);

// Convergence studies.
enum class ProblemId {
  PoissonCircle,
  PoissonCircleOneSided,
  HeatDirichlet,
  HeatNeumann,
  DziukClosed,
  DziukOpen,
  DziukDirichlet,
};
const char* problem_name(ProblemId id);
ProblemId parse_problem(const std::string& name);

struct ConvergenceRow {
  double dx = 0.0;
  double error = 0.0;
  double order = 0.0;  // NaN for the first row
  double rms = 0.0;
  int n_pde = 0;
  double seconds = 0.0;
};
struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  double slope = 0.0;
};

/// Runs one problem at a given dx and method.
ProblemResult run_problem(ProblemId id, double dx, IbcMethod method, const SolverConfig& solver = {});
/// Least-squares slope of log(error) against log(dx).
double fit_slope(std::span<const double> dx, std::span<const double> err);
ConvergenceReport convergence_harness(ProblemId id, const std::vector<double>& dxs, IbcMethod method,
                                      const SolverConfig& solver = {});
void write_convergence_csv(const ConvergenceReport& report, std::ostream& out);

}  // namespace cpm
