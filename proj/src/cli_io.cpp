#include "cpm/cli_io.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cpm/errors.hpp"
#include "cpm/tube_grid.hpp"

namespace cpm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string located(const std::string& name, int line, const std::string& what) {
  std::ostringstream msg;
  msg << name << ':' << line << ": " << what;
  return msg.str();
}

// Strict decimal parse of a whole token.
bool parse_double(const std::string& tok, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(tok, &pos);
    return pos == tok.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  return in;
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

// --- JSON helpers -----------------------------------------------------------

[[noreturn]] void bad_config(const std::string& what) { fail(ErrorCode::InvalidConfig, what); }

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) bad_config(where + " must be an object");
  for (const auto& item : obj.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) bad_config("unknown key '" + (where.empty() ? "" : where + ".") + item.key() + "'");
  }
}

double num(const json& obj, const char* key, double def, const std::string& where) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number()) bad_config(where + "." + key + " must be a number");
  return v.get<double>();
}

int integer(const json& obj, const char* key, int def, const std::string& where) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) bad_config(where + "." + key + " must be an integer");
  return v.get<int>();
}

bool boolean(const json& obj, const char* key, bool def, const std::string& where) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_boolean()) bad_config(where + "." + key + " must be true or false");
  return v.get<bool>();
}

std::string text(const json& obj, const char* key, const std::string& def, const std::string& where) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_string()) bad_config(where + "." + key + " must be a string");
  return v.get<std::string>();
}

// [x, y] or [x, y, z]; reports the length through `dim`.
Vec3 vec(const json& obj, const char* key, const Vec3& def, const std::string& where, int* dim = nullptr) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() < 2 || v.size() > 3) bad_config(where + "." + key + " must be an array of 2 or 3 numbers");
  Vec3 out = Vec3::Zero();
  for (std::size_t c = 0; c < v.size(); ++c) {
    if (!v[c].is_number()) bad_config(where + "." + key + " must be an array of 2 or 3 numbers");
    out[c] = v[c].get<double>();
  }
  if (dim) *dim = static_cast<int>(v.size());
  return out;
}

json as_desc(const json& desc, const std::string& where) {
  if (desc.is_string()) return json{{"type", desc.get<std::string>()}};
  if (!desc.is_object() || !desc.contains("type") || !desc.at("type").is_string()) {
    bad_config(where + " must be a type name or an object with a \"type\"");
  }
  return desc;
}

// --- geometry ---------------------------------------------------------------

void check_surface_desc(const json& raw, const std::string& where) {
  const json d = as_desc(raw, where);
  const std::string t = d.at("type");
  if (t == "sphere" || t == "circle") {
    check_keys(d, {"type", "center", "radius"}, where);
  } else if (t == "torus") {
    check_keys(d, {"type", "center", "R", "r"}, where);
  } else if (t == "plane-square") {
    check_keys(d, {"type", "lo", "hi", "dim"}, where);
  } else if (t == "dziuk") {
    check_keys(d, {"type"}, where);
  } else if (t == "mesh") {
    check_keys(d, {"type", "path", "normalize"}, where);
    if (!d.contains("path")) bad_config(where + ".path is required");
    text(d, "path", "", where);
    boolean(d, "normalize", true, where);
  } else if (t == "icosphere") {
    check_keys(d, {"type", "subdivisions", "radius"}, where);
  } else if (t == "mobius") {
    check_keys(d, {"type", "n_around", "n_across", "R", "w"}, where);
  } else if (t == "composite") {
    check_keys(d, {"type", "parts"}, where);
    if (!d.contains("parts") || !d.at("parts").is_array() || d.at("parts").empty()) {
      bad_config(where + ".parts must be a nonempty array");
    }
    for (std::size_t k = 0; k < d.at("parts").size(); ++k) {
      check_surface_desc(d.at("parts")[k], where + ".parts[" + std::to_string(k) + "]");
    }
  } else {
    bad_config(where + ": unknown surface type '" + t + "'");
  }
}

void check_curve_desc(const json& raw, const std::string& where) {
  const json d = as_desc(raw, where);
  const std::string t = d.at("type");
  if (t == "point") {
    check_keys(d, {"type", "at"}, where);
    if (!d.contains("at")) bad_config(where + ".at is required");
  } else if (t == "circle") {
    check_keys(d, {"type", "center", "radius"}, where);
  } else if (t == "circle3") {
    check_keys(d, {"type", "center", "normal", "radius"}, where);
  } else if (t == "arc") {
    check_keys(d, {"type", "center", "e1", "e2", "radius", "t0", "t1", "dim"}, where);
  } else if (t == "segment") {
    check_keys(d, {"type", "a", "b"}, where);
    if (!d.contains("a") || !d.contains("b")) bad_config(where + " needs endpoints a and b");
  } else if (t == "polyline") {
    check_keys(d, {"type", "path", "points", "closed"}, where);
    if (d.contains("path") == d.contains("points")) bad_config(where + " needs exactly one of path or points");
  } else if (t == "torus-knot") {
    check_keys(d, {"type", "a", "b", "R"}, where);
  } else if (t == "planar-param-curve") {
    check_keys(d, {"type", "a", "b", "c", "dim"}, where);
  } else if (t == "composite") {
    check_keys(d, {"type", "parts"}, where);
    if (!d.contains("parts") || !d.at("parts").is_array() || d.at("parts").empty()) {
      bad_config(where + ".parts must be a nonempty array");
    }
    for (std::size_t k = 0; k < d.at("parts").size(); ++k) {
      check_curve_desc(d.at("parts")[k], where + ".parts[" + std::to_string(k) + "]");
    }
  } else {
    bad_config(where + ": unknown curve type '" + t + "'");
  }
}

int dim_param(const json& d, int def, const std::string& where) {
  const int dim = integer(d, "dim", def, where);
  if (dim != 2 && dim != 3) bad_config(where + ".dim must be 2 or 3");
  return dim;
}

Geometry composite_of(std::vector<Geometry> parts) {
  Geometry g;
  g.dim = parts.front().dim;
  std::vector<SurfacePtr> shapes;
  for (const Geometry& p : parts) {
    if (p.dim != g.dim) fail(ErrorCode::InconsistentDimensions, "composite parts have different dimensions");
    shapes.push_back(p.shape);
  }
  g.shape = make_composite(std::move(shapes));
  return g;
}

// --- configs ----------------------------------------------------------------

const char* kCommon[] = {"dx", "p", "threads", "deterministic", "output_dir", "solver", "band_radius"};

void check_command_keys(const json& doc, const std::string& cmd, std::initializer_list<const char*> extra) {
  if (!doc.is_object()) bad_config("config must be a JSON object");
  for (const auto& item : doc.items()) {
    const std::string& k = item.key();
    if (k == "command") continue;
    const bool common = std::any_of(std::begin(kCommon), std::end(kCommon), [&](const char* c) { return k == c; });
    const bool own = std::any_of(extra.begin(), extra.end(), [&](const char* c) { return k == c; });
    if (!common && !own) bad_config("unknown key '" + k + "' for " + cmd);
  }
}

SolverConfig solver_config(const json& doc) {
  SolverConfig s;
  if (!doc.contains("solver")) return s;
  const json& j = doc.at("solver");
  check_keys(j, {"tol", "max_iter", "precond", "jacobi_sweeps", "jacobi_omega"}, "solver");
  s.tol = num(j, "tol", s.tol, "solver");
  s.max_iter = integer(j, "max_iter", s.max_iter, "solver");
  const std::string pc = text(j, "precond", "damped-jacobi", "solver");
  if (pc == "none") s.precond = PrecondMode::None;
  else if (pc == "diagonal") s.precond = PrecondMode::Diagonal;
  else if (pc == "damped-jacobi") s.precond = PrecondMode::DampedJacobi;
  else bad_config("solver.precond must be none, diagonal or damped-jacobi");
  s.jacobi_sweeps = integer(j, "jacobi_sweeps", s.jacobi_sweeps, "solver");
  s.jacobi_omega = num(j, "jacobi_omega", s.jacobi_omega, "solver");
  if (!(s.tol > 0.0)) bad_config("solver.tol must be positive");
  return s;
}

BcKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "dirichlet") return BcKind::Dirichlet;
  if (s == "neumann") return BcKind::ZeroNeumann;
  bad_config(where + " must be dirichlet or neumann");
}

void check_bc(const json& doc) {
  if (!doc.contains("bc")) return;
  const json& bc = doc.at("bc");
  check_keys(bc, {"order", "plus", "minus", "two_sided", "orientation", "robust"}, "bc");
  const int order = integer(bc, "order", 1, "bc");
  if (order != 1 && order != 2) bad_config("bc.order must be 1 or 2");
  parse_kind(text(bc, "plus", "dirichlet", "bc"), "bc.plus");
  parse_kind(text(bc, "minus", "dirichlet", "bc"), "bc.minus");
  boolean(bc, "two_sided", false, "bc");
  const int robust = integer(bc, "robust", -1, "bc");
  if (robust < -1 || robust > 1) bad_config("bc.robust must be -1, 0 or 1");
  if (bc.contains("orientation")) {
    const json& o = bc.at("orientation");
    check_keys(o, {"type", "point", "vector"}, "bc.orientation");
    const std::string t = text(o, "type", "", "bc.orientation");
    if (t == "away-from") {
      if (!o.contains("point")) bad_config("bc.orientation.point is required");
    } else if (t == "constant") {
      if (!o.contains("vector")) bad_config("bc.orientation.vector is required");
    } else {
      bad_config("bc.orientation.type must be away-from or constant");
    }
  }
}

void check_direction(const json& doc, const char* key) {
  if (!doc.contains(key)) return;
  const json& d = doc.at(key);
  const std::string where = key;
  check_keys(d, {"type", "vector", "axis"}, where);
  const std::string t = text(d, "type", "", where);
  if (t == "constant") {
    if (!d.contains("vector")) bad_config(where + ".vector is required");
  } else if (t == "rotation") {
    if (!d.contains("axis")) bad_config(where + ".axis is required");
  } else {
    bad_config(where + ".type must be constant or rotation");
  }
}

BcSpec bc_spec(const json& doc) {
  BcSpec s;
  if (!doc.contains("bc")) return s;
  const json& bc = doc.at("bc");
  s.order = integer(bc, "order", 1, "bc");
  s.plus_kind = parse_kind(text(bc, "plus", "dirichlet", "bc"), "bc.plus");
  s.minus_kind = parse_kind(text(bc, "minus", "dirichlet", "bc"), "bc.minus");
  s.two_sided = boolean(bc, "two_sided", false, "bc");
  s.robust = integer(bc, "robust", -1, "bc");
  if (bc.contains("orientation")) {
    const json& o = bc.at("orientation");
    if (text(o, "type", "", "bc.orientation") == "away-from") {
      const Vec3 c = vec(o, "point", Vec3::Zero(), "bc.orientation");
      s.orientation = [c](const Vec3& y) { return Vec3(y - c); };
    } else {
      const Vec3 v = vec(o, "vector", Vec3::UnitX(), "bc.orientation");
      s.orientation = [v](const Vec3&) { return v; };
    }
  }
  return s;
}

std::function<Vec3(const Vec3&)> direction(const json& doc, const char* key) {
  if (!doc.contains(key)) return {};
  const json& d = doc.at(key);
  if (text(d, "type", "", key) == "constant") {
    const Vec3 v = vec(d, "vector", Vec3::Zero(), key);
    return [v](const Vec3&) { return v; };
  }
  const Vec3 a = vec(d, "axis", Vec3::UnitZ(), key);
  return [a](const Vec3& y) { return Vec3(a.cross(y)); };
}

json solve_stats_json(const std::vector<SolveStats>& stats, bool deterministic) {
  json out = json::array();
  for (const SolveStats& s : stats) {
    json j{{"iterations", s.iterations}, {"residual", s.residual}, {"converged", s.converged}, {"direct", s.direct},
           {"restarts", s.restarts}};
    if (!deterministic) j["seconds"] = s.seconds;
    out.push_back(j);
  }
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "write to '" + path.string() + "' failed");
}

json normalization_json(const Normalization& n) {
  return json{{"scale", n.scale}, {"center", {n.center.x(), n.center.y(), n.center.z()}}};
}

int problem_dim(const std::string& cmd) { return cmd == "poisson-circle" ? 2 : 3; }

void check_band_radius(const json& doc, double dx, int dim, int p, int q) {
  if (!doc.contains("band_radius")) return;
  const double given = num(doc, "band_radius", 0.0, "config");
  const double r = tube_radius(dx, dim, p, q);
  if (std::abs(given - r) > 1e-9 * r) {
    std::ostringstream msg;
    msg << std::setprecision(17) << "band_radius " << given << " does not match the tube radius " << r
        << " for dx = " << dx << ", d = " << dim << ", p = " << p << ", q = " << q;
    bad_config(msg.str());
  }
}

// --- subcommands --------------------------------------------------------------

struct Context {
  const RunConfig& cfg;
  const json& doc;
  fs::path out;
  json summary;
};

double dx_of(const json& doc) { return doc.at("dx").get<double>(); }
int p_of(const json& doc) { return doc.at("p").get<int>(); }
int q_of(const json& doc) { return doc.contains("q") ? doc.at("q").get<int>() : 1; }

void emit_problem(Context& c, const ProblemResult& r) {
  std::vector<double> err(r.values.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = r.values[i] - r.exact[i];
  write_ply(c.out / (c.cfg.command + ".ply"), r.points, {{"u", r.values, {}}, {"exact", r.exact, {}}, {"error", err, {}}});
  c.summary["error_max"] = r.error.max;
  c.summary["error_rms"] = r.error.rms;
  c.summary["n_pde"] = r.n_pde;
  c.summary["n_band"] = r.n_band;
  c.summary["solves"] = solve_stats_json(r.stats, c.cfg.deterministic);
  if (!c.cfg.deterministic) c.summary["seconds"] = r.seconds;
}

void run_poisson_circle(Context& c) {
  PoissonCircleConfig pc;
  pc.dx = dx_of(c.doc);
  pc.p = p_of(c.doc);
  pc.method = parse_method(c.doc.at("method"));
  pc.two_sided = boolean(c.doc, "two_sided", pc.two_sided, "config");
  pc.theta_c = num(c.doc, "theta_c", pc.theta_c, "config");
  emit_problem(c, solve_poisson_circle(pc));
}

void run_heat_sphere(Context& c) {
  HeatSphereConfig hc;
  hc.dx = dx_of(c.doc);
  hc.p = p_of(c.doc);
  hc.method = parse_method(c.doc.at("method"));
  hc.kind = parse_kind(text(c.doc, "kind", "dirichlet", "config"), "kind");
  hc.t_end = num(c.doc, "t_end", hc.t_end, "config");
  hc.dt_factor = num(c.doc, "dt_factor", hc.dt_factor, "config");
  hc.solver = solver_config(c.doc);
  emit_problem(c, run_heat(hc));
}

void run_dziuk(Context& c) {
  DziukConfig dc;
  dc.dx = dx_of(c.doc);
  dc.p = p_of(c.doc);
  dc.method = parse_method(c.doc.at("method"));
  dc.kind = parse_kind(text(c.doc, "kind", "neumann", "config"), "kind");
  dc.open = boolean(c.doc, "open", dc.open, "config");
  dc.c = num(c.doc, "c", dc.c, "config");
  dc.solver = solver_config(c.doc);
  emit_problem(c, solve_screened_poisson_dziuk(dc));
}

struct Scene {
  Geometry surface;
  Geometry curve;
  Normalization norm;
};

Scene load_scene(Context& c, const char* curve_key) {
  Scene s;
  s.surface = load_surface(c.doc.at("surface"), s.norm, c.cfg.base_dir);
  s.curve = load_curve(c.doc.at(curve_key), s.norm, c.cfg.base_dir);
  if (s.curve.dim != s.surface.dim) {
    fail(ErrorCode::InconsistentDimensions, "curve and surface dimensions differ");
  }
  check_band_radius(c.doc, dx_of(c.doc), s.surface.dim, p_of(c.doc), q_of(c.doc));
  validate_curve_on_surface(*s.surface.shape, *s.curve.shape, 0.5 * dx_of(c.doc));
  c.summary["normalization"] = normalization_json(s.norm);
  return s;
}

void run_geodesic(Context& c) {
  const Scene s = load_scene(c, "source");
  GeodesicConfig gc;
  gc.surface = s.surface.shape;
  gc.curve = s.curve.shape;
  gc.dx = dx_of(c.doc);
  gc.p = p_of(c.doc);
  gc.q = q_of(c.doc);
  gc.m = num(c.doc, "m", gc.m, "config");
  gc.extra_passes = integer(c.doc, "extra_passes", gc.extra_passes, "config");
  gc.direct_cap = integer(c.doc, "direct_cap", gc.direct_cap, "config");
  gc.solver = solver_config(c.doc);
  const GeodesicResult r = geodesic_distance(gc);
  write_ply(c.out / "geodesic.ply", r.points, {{"distance", r.distance, {}}}, s.norm);
  c.summary["n_pde"] = r.n_pde;
  c.summary["n_band"] = r.n_band;
  c.summary["shift"] = r.shift;
  c.summary["solves"] = solve_stats_json(r.stats, c.cfg.deterministic);
}

void run_diffusion_curves(Context& c) {
  const Scene s = load_scene(c, "curve");
  DiffusionCurvesConfig dc;
  dc.surface = s.surface.shape;
  dc.curve = s.curve.shape;
  dc.spec = bc_spec(c.doc);
  dc.dx = dx_of(c.doc);
  dc.p = p_of(c.doc);
  dc.q = q_of(c.doc);
  dc.solver = solver_config(c.doc);
  std::vector<std::string> names;
  for (const json& ch : c.doc.at("channels")) {
    names.push_back(ch.at("name"));
    BcValues g;
    const double plus = ch.at("plus");
    g.plus = [plus](const Vec3&) { return plus; };
    if (ch.contains("minus")) {
      const double minus = ch.at("minus");
      g.minus = [minus](const Vec3&) { return minus; };
    }
    dc.channels.push_back(g);
  }
  const ChannelResult r = diffusion_curves(dc);
  std::vector<PlyAttribute> attrs;
  for (std::size_t k = 0; k < names.size(); ++k) attrs.push_back({names[k], r.channels[k], {}});
  write_ply(c.out / "diffusion-curves.ply", r.points, attrs, s.norm);
  c.summary["n_pde"] = r.n_pde;
  c.summary["n_band"] = r.n_band;
  c.summary["solves"] = solve_stats_json(r.stats, c.cfg.deterministic);
}

void run_vfd(Context& c) {
  const Scene s = load_scene(c, "curve");
  VfdConfig vc;
  vc.surface = s.surface.shape;
  vc.curve = s.curve.shape;
  vc.spec = bc_spec(c.doc);
  vc.plus = direction(c.doc, "plus");
  vc.minus = direction(c.doc, "minus");
  vc.dx = dx_of(c.doc);
  vc.p = p_of(c.doc);
  vc.q = q_of(c.doc);
  vc.iterations = integer(c.doc, "iterations", vc.iterations, "config");
  vc.dt_factor = num(c.doc, "dt_factor", vc.dt_factor, "config");
  vc.solver = solver_config(c.doc);
  const VfdResult r = vector_field_design(vc);
  double tangency = 0.0;
  for (std::size_t i = 0; i < r.field.size(); ++i) tangency = std::max(tangency, std::abs(r.field[i].dot(r.normal[i])));
  write_ply(c.out / "vfd.ply", r.points, {{"u", {}, r.field}, {"n", {}, r.normal}}, s.norm);
  c.summary["n_pde"] = r.n_pde;
  c.summary["n_band"] = r.n_band;
  c.summary["max_normal_component"] = tangency;
  c.summary["solves"] = solve_stats_json(r.stats, c.cfg.deterministic);
}

TriangleMesh mesh_of(const Geometry& g, const char* what) {
  if (!g.mesh) bad_config(std::string(what) + " must be a mesh, icosphere or mobius surface");
  return *g.mesh;
}

void run_harmonic_map(Context& c) {
  Normalization norm;
  const Geometry s1 = load_surface(c.doc.at("s1"), norm, c.cfg.base_dir);
  // S2 takes the S1 transform so both meshes are scaled uniformly.
  json s2_desc = as_desc(c.doc.at("s2"), "s2");
  const bool s2_normalize = s2_desc.at("type") == "mesh" && boolean(s2_desc, "normalize", true, "s2");
  if (s2_desc.at("type") == "mesh") s2_desc["normalize"] = false;
  Normalization unused;
  TriangleMesh m2 = mesh_of(load_surface(s2_desc, unused, c.cfg.base_dir), "s2");
  if (s2_normalize) {
    for (Vec3& v : m2.vertices) v = norm.apply(v);
  }
  check_band_radius(c.doc, dx_of(c.doc), 3, p_of(c.doc), q_of(c.doc));
  HarmonicMapConfig hc;
  hc.s1 = mesh_of(s1, "s1");
  hc.s2 = std::move(m2);
  hc.dx = dx_of(c.doc);
  hc.p = p_of(c.doc);
  hc.q = q_of(c.doc);
  hc.steps = integer(c.doc, "steps", hc.steps, "config");
  hc.dt_factor = num(c.doc, "dt_factor", hc.dt_factor, "config");
  hc.noise = num(c.doc, "noise", hc.noise, "config");
  hc.seed = static_cast<unsigned>(integer(c.doc, "seed", static_cast<int>(hc.seed), "config"));
  if (c.doc.contains("landmark")) {
    const Geometry lm = load_curve(c.doc.at("landmark"), norm, c.cfg.base_dir);
    validate_curve_on_surface(*s1.shape, *lm.shape, 0.5 * hc.dx);
    hc.landmark = lm.shape;
    const auto S2 = make_mesh(hc.s2);
    hc.landmark_map = [S2](const Vec3& y) { return S2->closest_point(y).cp; };
  }
  const HarmonicMapResult r = harmonic_map(hc);
  write_ply(c.out / "harmonic-map.ply", r.points, {{"map", {}, r.map}}, norm);
  write_ply(c.out / "harmonic-map-vertices.ply", hc.s1.vertices, {{"map", {}, r.vertex_map}}, norm);
  c.summary["normalization"] = normalization_json(norm);
  c.summary["n_pde"] = r.n_pde;
  c.summary["n_band"] = r.n_band;
  c.summary["step_displacement"] = r.step_displacement;
}

void run_convergence(Context& c) {
  const ProblemId id = parse_problem(text(c.doc, "problem", "", "config"));
  const IbcMethod method = parse_method(c.doc.at("method"));
  const std::vector<double> dxs = c.doc.at("dxs").get<std::vector<double>>();
  const ConvergenceReport rep = convergence_harness(id, dxs, method, solver_config(c.doc));
  const fs::path csv = c.out / "convergence.csv";
  std::ofstream out(csv);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + csv.string() + "' for writing");
  write_convergence_csv(rep, out);
  if (!out) fail(ErrorCode::IoError, "write to '" + csv.string() + "' failed");
  c.summary["problem"] = problem_name(id);
  c.summary["slope"] = rep.slope;
  json rows = json::array();
  for (const ConvergenceRow& r : rep.rows) {
    json j{{"dx", r.dx}, {"error", r.error}, {"rms", r.rms}, {"n_pde", r.n_pde}};
    if (!c.cfg.deterministic) j["seconds"] = r.seconds;
    rows.push_back(j);
  }
  c.summary["rows"] = rows;
}

}  // namespace

Normalization normalization_for(std::span<const Vec3> points) {
  Normalization n;
  if (points.empty()) return n;
  Vec3 lo = points.front(), hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  n.center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo).maxCoeff();
  n.scale = half > 0.0 ? half : 1.0;
  return n;
}

TriangleMesh read_obj(std::istream& in, const std::string& name) {
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(strip_comment(line));
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      std::vector<double> c;
      std::string tok;
      while (ss >> tok) {
        double v;
        if (!parse_double(tok, v)) fail(ErrorCode::ParseError, located(name, lineno, "bad vertex coordinate '" + tok + "'"));
        c.push_back(v);
      }
      if (c.size() < 3 || c.size() > 4) fail(ErrorCode::ParseError, located(name, lineno, "vertex needs 3 coordinates"));
      mesh.vertices.emplace_back(c[0], c[1], c[2]);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        int k = 0;
        try {
          std::size_t pos = 0;
          k = std::stoi(head, &pos);
          if (pos != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          fail(ErrorCode::ParseError, located(name, lineno, "bad face index '" + tok + "'"));
        }
        const int nv = static_cast<int>(mesh.vertices.size());
        const int i = k > 0 ? k - 1 : nv + k;
        if (k == 0 || i < 0 || i >= nv) {
          fail(ErrorCode::ParseError, located(name, lineno, "face index " + head + " out of range"));
        }
        idx.push_back(i);
      }
      if (idx.size() < 3) fail(ErrorCode::ParseError, located(name, lineno, "face needs at least 3 vertices"));
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) mesh.triangles.push_back({idx[0], idx[t], idx[t + 1]});
    }
  }
  return mesh;
}

TriangleMesh read_obj_file(const std::string& path) {
  std::ifstream in = open_input(path);
  return read_obj(in, path);
}

PolylineData read_polyline(std::istream& in, const std::string& name) {
  PolylineData out;
  out.dim = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(strip_comment(line));
    std::vector<std::string> toks;
    for (std::string t; ss >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    if (toks[0] == "closed") {
      if (!out.points.empty()) fail(ErrorCode::ParseError, located(name, lineno, "'closed' must precede the vertices"));
      if (toks.size() != 2 || (toks[1] != "0" && toks[1] != "1")) {
        fail(ErrorCode::ParseError, located(name, lineno, "expected 'closed 0' or 'closed 1'"));
      }
      out.closed = toks[1] == "1";
      continue;
    }
    if (toks.size() < 2 || toks.size() > 3) {
      fail(ErrorCode::ParseError, located(name, lineno, "expected 2 or 3 coordinates"));
    }
    const int d = static_cast<int>(toks.size());
    if (out.dim != 0 && d != out.dim) {
      fail(ErrorCode::InconsistentDimensions,
           located(name, lineno, "vertex has " + std::to_string(d) + " coordinates, earlier ones " + std::to_string(out.dim)));
    }
    out.dim = d;
    Vec3 p = Vec3::Zero();
    for (int c = 0; c < d; ++c) {
      if (!parse_double(toks[c], p[c])) fail(ErrorCode::ParseError, located(name, lineno, "bad coordinate '" + toks[c] + "'"));
    }
    out.points.push_back(p);
  }
  if (out.points.size() < 2) fail(ErrorCode::ParseError, name + ": a polyline needs at least two vertices");
  return out;
}

PolylineData read_polyline_file(const std::string& path) {
  std::ifstream in = open_input(path);
  return read_polyline(in, path);
}

Geometry load_surface(const json& raw, Normalization& norm, const std::string& base_dir) {
  check_surface_desc(raw, "surface");
  const json d = as_desc(raw, "surface");
  const std::string t = d.at("type");
  const std::string w = "surface";
  Geometry g;
  if (t == "sphere") {
    g.shape = make_sphere(vec(d, "center", Vec3::Zero(), w), num(d, "radius", 1.0, w));
  } else if (t == "circle") {
    g.dim = 2;
    g.shape = make_circle(vec(d, "center", Vec3::Zero(), w), num(d, "radius", 1.0, w));
  } else if (t == "torus") {
    g.shape = make_torus(vec(d, "center", Vec3::Zero(), w), num(d, "R", 1.0, w), num(d, "r", 0.4, w));
  } else if (t == "plane-square") {
    g.dim = dim_param(d, 3, w);
    g.shape = make_plane_square(num(d, "lo", -1.0, w), num(d, "hi", 1.0, w), g.dim);
  } else if (t == "dziuk") {
    g.shape = make_dziuk_surface();
  } else if (t == "mesh") {
    TriangleMesh m = read_obj_file(resolve(d.at("path"), base_dir));
    if (boolean(d, "normalize", true, w)) {
      norm = normalization_for(m.vertices);
      for (Vec3& v : m.vertices) v = norm.apply(v);
    }
    g.shape = make_mesh(m);
    g.mesh = std::move(m);
  } else if (t == "icosphere") {
    TriangleMesh m = make_icosphere(integer(d, "subdivisions", 3, w), num(d, "radius", 1.0, w));
    g.shape = make_mesh(m);
    g.mesh = std::move(m);
  } else if (t == "mobius") {
    TriangleMesh m = make_mobius_mesh(integer(d, "n_around", 96, w), integer(d, "n_across", 8, w), num(d, "R", 1.0, w),
                                      num(d, "w", 0.4, w));
    g.shape = make_mesh(m);
    g.mesh = std::move(m);
  } else {
    std::vector<Geometry> parts;
    for (const json& p : d.at("parts")) parts.push_back(load_surface(p, norm, base_dir));
    return composite_of(std::move(parts));
  }
  return g;
}

Geometry load_curve(const json& raw, const Normalization& norm, const std::string& base_dir) {
  check_curve_desc(raw, "curve");
  const json d = as_desc(raw, "curve");
  const std::string t = d.at("type");
  const std::string w = "curve";
  Geometry g;
  if (t == "point") {
    const Vec3 at = vec(d, "at", Vec3::Zero(), w, &g.dim);
    g.shape = make_point(at, g.dim);
  } else if (t == "circle") {
    g.dim = 2;
    g.shape = make_circle(vec(d, "center", Vec3::Zero(), w), num(d, "radius", 1.0, w));
  } else if (t == "circle3") {
    g.shape = make_circle3(vec(d, "center", Vec3::Zero(), w), vec(d, "normal", Vec3::UnitZ(), w), num(d, "radius", 1.0, w));
  } else if (t == "arc") {
    g.dim = dim_param(d, 3, w);
    g.shape = make_arc(vec(d, "center", Vec3::Zero(), w), vec(d, "e1", Vec3::UnitX(), w), vec(d, "e2", Vec3::UnitY(), w),
                       num(d, "radius", 1.0, w), num(d, "t0", 0.0, w), num(d, "t1", 3.14159265358979323846, w), g.dim);
  } else if (t == "segment") {
    int da = 3, db = 3;
    const Vec3 a = vec(d, "a", Vec3::Zero(), w, &da);
    const Vec3 b = vec(d, "b", Vec3::Zero(), w, &db);
    if (da != db) fail(ErrorCode::InconsistentDimensions, "segment endpoints have different dimensions");
    g.dim = da;
    g.shape = make_segment(a, b, g.dim);
  } else if (t == "polyline") {
    PolylineData pl;
    if (d.contains("path")) {
      pl = read_polyline_file(resolve(d.at("path"), base_dir));
      for (Vec3& p : pl.points) p = norm.apply(p);
      if (pl.dim == 2) {
        for (Vec3& p : pl.points) p.z() = 0.0;
      }
    } else {
      const json& pts = d.at("points");
      if (!pts.is_array() || pts.size() < 2) bad_config("curve.points must hold at least two points");
      pl.dim = 0;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        int dk = 0;
        const Vec3 p = vec(json{{"p", pts[k]}}, "p", Vec3::Zero(), "curve.points[" + std::to_string(k) + "]", &dk);
        if (pl.dim != 0 && dk != pl.dim) fail(ErrorCode::InconsistentDimensions, "curve.points mixes 2D and 3D points");
        pl.dim = dk;
        pl.points.push_back(p);
      }
    }
    pl.closed = boolean(d, "closed", pl.closed, w);
    g.dim = pl.dim;
    g.shape = make_polyline(std::move(pl.points), pl.closed, g.dim);
  } else if (t == "torus-knot") {
    g.shape = make_torus_knot(num(d, "a", 3.0, w), num(d, "b", 7.0, w), num(d, "R", 3.0, w));
  } else if (t == "planar-param-curve") {
    g.dim = dim_param(d, 2, w);
    g.shape = make_planar_param_curve(num(d, "a", 3.0, w), num(d, "b", 4.0, w), num(d, "c", -0.5, w), g.dim);
  } else {
    std::vector<Geometry> parts;
    for (const json& p : d.at("parts")) parts.push_back(load_curve(p, norm, base_dir));
    return composite_of(std::move(parts));
  }
  return g;
}

void validate_curve_on_surface(const Surface& surface, const Surface& curve, double spacing, double tol) {
  for (const Vec3& y : curve.sample(spacing)) {
    const double dist = surface.closest_point(y).dist;
    if (dist > tol) {
      std::ostringstream msg;
      msg << "curve point (" << y.transpose() << ") is " << dist << " away from the surface";
      fail(ErrorCode::CurveOffSurface, msg.str());
    }
  }
}

void write_ply(std::ostream& out, std::span<const Vec3> points, const std::vector<PlyAttribute>& attributes,
               const Normalization& norm) {
  for (const PlyAttribute& a : attributes) {
    const std::size_t n = a.vector.empty() ? a.scalar.size() : a.vector.size();
    if (n != points.size() || (!a.vector.empty() && !a.scalar.empty())) {
      fail(ErrorCode::DimensionMismatch, "PLY attribute '" + a.name + "' does not match the point count");
    }
  }
  out << std::setprecision(17);
  out << "ply\nformat ascii 1.0\ncomment generated by cpm\n";
  out << "comment normalization_scale " << norm.scale << '\n';
  out << "comment normalization_center " << norm.center.x() << ' ' << norm.center.y() << ' ' << norm.center.z() << '\n';
  out << "element vertex " << points.size() << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  for (const PlyAttribute& a : attributes) {
    if (a.vector.empty()) {
      out << "property double " << a.name << '\n';
    } else {
      for (const char* c : {"x", "y", "z"}) out << "property double " << a.name << c << '\n';
    }
  }
  out << "element face 0\nproperty list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << points[i].x() << ' ' << points[i].y() << ' ' << points[i].z();
    for (const PlyAttribute& a : attributes) {
      if (a.vector.empty()) {
        out << ' ' << a.scalar[i];
      } else {
        out << ' ' << a.vector[i].x() << ' ' << a.vector[i].y() << ' ' << a.vector[i].z();
      }
    }
    out << '\n';
  }
}

void write_ply(const std::string& path, std::span<const Vec3> points, const std::vector<PlyAttribute>& attributes,
               const Normalization& norm) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  write_ply(out, points, attributes, norm);
  out.flush();
  if (!out) fail(ErrorCode::IoError, "write to '" + path + "' failed");
}

PlyData read_ply(std::istream& in) {
  PlyData d;
  std::string line;
  std::size_t n = 0;
  bool in_vertex = false;
  int lineno = 0;
  if (!std::getline(in, line) || line != "ply") fail(ErrorCode::ParseError, "<ply>:1: missing 'ply' magic");
  ++lineno;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "end_header") break;
    if (tag == "comment") {
      d.comments.push_back(line.size() > 8 ? line.substr(8) : "");
    } else if (tag == "element") {
      std::string what;
      ss >> what;
      in_vertex = what == "vertex";
      if (in_vertex) ss >> n;
    } else if (tag == "property" && in_vertex) {
      std::string type, name;
      ss >> type >> name;
      d.properties.push_back(name);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    ++lineno;
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, located("<ply>", lineno, "missing vertex row"));
    std::istringstream ss(line);
    std::vector<double> row;
    for (std::string tok; ss >> tok;) {
      double v;
      if (!parse_double(tok, v)) fail(ErrorCode::ParseError, located("<ply>", lineno, "bad value '" + tok + "'"));
      row.push_back(v);
    }
    if (row.size() != d.properties.size()) fail(ErrorCode::ParseError, located("<ply>", lineno, "wrong number of values"));
    d.rows.push_back(std::move(row));
  }
  return d;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"poisson-circle", "heat-sphere", "screened-dziuk", "geodesic",
                                              "diffusion-curves", "vfd", "harmonic-map", "convergence"};
  return names;
}

RunConfig parse_config(const std::string& command, const json& input) {
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), command) == names.end()) bad_config("unknown subcommand '" + command + "'");
  json doc = input.is_null() ? json::object() : input;
  if (!doc.is_object()) bad_config("config must be a JSON object");
  if (doc.contains("command") && doc.at("command") != command) {
    bad_config("config is for '" + text(doc, "command", "", "config") + "', not '" + command + "'");
  }
  const std::string& c = command;
  if (c == "poisson-circle") check_command_keys(doc, c, {"method", "two_sided", "theta_c"});
  else if (c == "heat-sphere") check_command_keys(doc, c, {"method", "kind", "t_end", "dt_factor"});
  else if (c == "screened-dziuk") check_command_keys(doc, c, {"method", "kind", "open", "c"});
  else if (c == "geodesic") check_command_keys(doc, c, {"surface", "source", "q", "m", "extra_passes", "direct_cap"});
  else if (c == "diffusion-curves") check_command_keys(doc, c, {"surface", "curve", "q", "bc", "channels"});
  else if (c == "vfd") check_command_keys(doc, c, {"surface", "curve", "q", "bc", "plus", "minus", "iterations", "dt_factor"});
  else if (c == "harmonic-map") check_command_keys(doc, c, {"s1", "s2", "q", "landmark", "steps", "dt_factor", "noise", "seed"});
  else check_command_keys(doc, c, {"method", "problem", "dxs"});

  const bool app = c == "geodesic" || c == "diffusion-curves" || c == "vfd" || c == "harmonic-map";
  if (c == "convergence") {
    if (doc.contains("dx")) bad_config("convergence takes a dxs list, not dx");
    if (doc.contains("p") || doc.contains("band_radius")) bad_config("convergence uses the problem's own p");
    if (!doc.contains("problem")) bad_config("convergence needs a problem");
    parse_problem(text(doc, "problem", "", "config"));
    if (!doc.contains("dxs") || !doc.at("dxs").is_array() || doc.at("dxs").empty()) bad_config("dxs must be a nonempty array");
    for (const json& v : doc.at("dxs")) {
      if (!v.is_number() || !(v.get<double>() > 0.0)) bad_config("every entry of dxs must be a positive number");
    }
  } else {
    const double dx_def = c == "poisson-circle" || c == "screened-dziuk" ? 0.1 : c == "heat-sphere" ? 0.2 : 0.05;
    const double dx = num(doc, "dx", dx_def, "config");
    if (!(dx > 0.0)) bad_config("dx must be positive");
    doc["dx"] = dx;
    const int p = integer(doc, "p", app ? 2 : 3, "config");
    if (p < 1) bad_config("p must be at least 1");
    doc["p"] = p;
    const int q = integer(doc, "q", 1, "config");
    if (q < 1) bad_config("q must be at least 1");
    if (!app) check_band_radius(doc, dx, problem_dim(c), p, q);
  }
  if (!app) {
    doc["method"] = text(doc, "method", "order2", "config");
    parse_method(doc.at("method"));
  }
  solver_config(doc);

  if (c == "poisson-circle") {
    boolean(doc, "two_sided", true, "config");
    num(doc, "theta_c", 0.0, "config");
  } else if (c == "heat-sphere" || c == "screened-dziuk") {
    parse_kind(text(doc, "kind", "dirichlet", "config"), "kind");
    for (const char* k : {"t_end", "dt_factor", "c"}) num(doc, k, 0.0, "config");
    boolean(doc, "open", false, "config");
  } else if (c == "geodesic") {
    if (!doc.contains("surface") || !doc.contains("source")) bad_config("geodesic needs surface and source");
    check_surface_desc(doc.at("surface"), "surface");
    check_curve_desc(doc.at("source"), "source");
    if (!(num(doc, "m", 100.0, "config") > 0.0)) bad_config("m must be positive");
    integer(doc, "extra_passes", 2, "config");
    integer(doc, "direct_cap", 20000, "config");
  } else if (c == "diffusion-curves" || c == "vfd") {
    if (!doc.contains("surface") || !doc.contains("curve")) bad_config(c + " needs surface and curve");
    check_surface_desc(doc.at("surface"), "surface");
    check_curve_desc(doc.at("curve"), "curve");
    check_bc(doc);
    if (c == "diffusion-curves") {
      if (!doc.contains("channels") || !doc.at("channels").is_array() || doc.at("channels").empty()) {
        bad_config("channels must be a nonempty array");
      }
      int k = 0;
      for (json& ch : doc.at("channels")) {
        const std::string w = "channels[" + std::to_string(k) + "]";
        check_keys(ch, {"name", "plus", "minus"}, w);
        if (!ch.contains("plus")) bad_config(w + ".plus is required");
        num(ch, "plus", 0.0, w);
        num(ch, "minus", 0.0, w);
        ch["name"] = text(ch, "name", "c" + std::to_string(k), w);
        ++k;
      }
    } else {
      if (!doc.contains("plus")) bad_config("vfd needs a plus direction");
      check_direction(doc, "plus");
      check_direction(doc, "minus");
      integer(doc, "iterations", 10, "config");
      num(doc, "dt_factor", 0.1, "config");
    }
  } else if (c == "harmonic-map") {
    if (!doc.contains("s1") || !doc.contains("s2")) bad_config("harmonic-map needs s1 and s2");
    check_surface_desc(doc.at("s1"), "s1");
    check_surface_desc(doc.at("s2"), "s2");
    if (doc.contains("landmark")) check_curve_desc(doc.at("landmark"), "landmark");
    integer(doc, "steps", 200, "config");
    integer(doc, "seed", 1, "config");
    num(doc, "dt_factor", 0.1, "config");
    if (num(doc, "noise", 0.0, "config") < 0.0) bad_config("noise must be nonnegative");
  }

  RunConfig cfg;
  cfg.command = command;
  cfg.threads = integer(doc, "threads", 0, "config");
  if (cfg.threads < 0) bad_config("threads must be nonnegative");
  cfg.deterministic = boolean(doc, "deterministic", false, "config");
  cfg.output_dir = text(doc, "output_dir", ".", "config");
  cfg.params = std::move(doc);
  return cfg;
}

json read_config_file(const std::string& path) {
  std::ifstream in = open_input(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, path + ": " + e.what());
  }
}

void run(const RunConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  Context c{cfg, cfg.params, fs::path(cfg.output_dir), json::object()};
  c.summary["command"] = cfg.command;
  const std::string& cmd = cfg.command;
  if (cmd == "poisson-circle") run_poisson_circle(c);
  else if (cmd == "heat-sphere") run_heat_sphere(c);
  else if (cmd == "screened-dziuk") run_dziuk(c);
  else if (cmd == "geodesic") run_geodesic(c);
  else if (cmd == "diffusion-curves") run_diffusion_curves(c);
  else if (cmd == "vfd") run_vfd(c);
  else if (cmd == "harmonic-map") run_harmonic_map(c);
  else run_convergence(c);
  if (cmd != "convergence") {
    c.summary["dx"] = cfg.params.at("dx");
    c.summary["p"] = cfg.params.at("p");
  }
  if (cfg.params.contains("method")) c.summary["method"] = cfg.params.at("method");
  write_json(c.out / "summary.json", c.summary);
}

void print_error_record(std::ostream& err, ErrorCode code, const std::string& message) {
  const json rec{{"error", error_name(code)}, {"exit_code", exit_code(code)}, {"message", message}};
  err << rec.dump() << '\n';
}

int run_guarded(const RunConfig& cfg, std::ostream& err) {
  try {
    run(cfg);
    return 0;
  } catch (const Error& e) {
    print_error_record(err, e.code(), e.what());
    return exit_code(e.code());
  }
}

}  // namespace cpm
