#include "cpm/ibc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "cpm/errors.hpp"

namespace cpm {

namespace {

constexpr double kEndTol = 1e-10;
constexpr double kGapTol = 1e-6;
constexpr double kTangentTol = 0.5;

[[noreturn]] void missing_twin(const SparseGrid& g, int row, int j) {
  std::ostringstream msg;
  msg << "stencil of DOF " << row << " crosses to grid point (" << g.position(j).transpose()
      << ") which has no band DOF; the band radius is too small";
  fail(ErrorCode::MissingBandTwin, msg.str());
}

SideTag label_of(const BcSpec& spec, const Vec3& v, bool oncurve, const Vec3& y, std::size_t& queries) {
  if (oncurve) return SideTag::Plus;
  ++queries;
  return v.dot(spec.orientation(y)) > 0.0 ? SideTag::Plus : SideTag::Minus;
}

// Eigenpairs of the symmetric part of a Jacobian, restricted to the xy block
// in 2D. Eigenvalues are sorted by absolute value, ascending.
struct SortedEig {
  Vec3 values = Vec3::Zero();
  Mat3 vectors = Mat3::Zero();
  int count = 0;
};

SortedEig sorted_eig(const Mat3& J, int dim) {
  const Mat3 S = 0.5 * (J + J.transpose());
  SortedEig out;
  out.count = dim;
  if (dim == 2) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(S.topLeftCorner<2, 2>());
    int order[2] = {0, 1};
    if (std::abs(es.eigenvalues()[1]) < std::abs(es.eigenvalues()[0])) std::swap(order[0], order[1]);
    for (int k = 0; k < 2; ++k) {
      out.values[k] = es.eigenvalues()[order[k]];
      out.vectors.col(k).head<2>() = es.eigenvectors().col(order[k]);
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Mat3> es(S);
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3,
              [&](int a, int b) { return std::abs(es.eigenvalues()[a]) < std::abs(es.eigenvalues()[b]); });
    for (int k = 0; k < 3; ++k) {
      out.values[k] = es.eigenvalues()[order[k]];
      out.vectors.col(k) = es.eigenvectors().col(order[k]);
    }
  }
  return out;
}

int stencil_width(int p, int dim) { return static_cast<int>(std::pow(p + 1, dim)); }

// Column ids of a stencil after band-row rewiring: points across from the
// director keep their PDE id, the rest (points on C included) map to their
// band twins. With local labels, a director on C has no side and keeps PDE
// ids throughout.
void rewire_band_stencil(const SparseGrid& g, const IbcBand& band, const SideData& sides, const Director& d, int row,
                         std::vector<int>& dofs, int& swaps) {
  if (!sides.global && d.oncurve) return;
  for (int& j : dofs) {
    if (across(band, sides, d, j)) continue;
    const int twin = band.band_of[j];
    // Past the ends of C only the PDE is solved.
    if (twin < 0 && band.cached[j] && band.at_endpoint[j]) continue;
    if (twin < 0) missing_twin(g, row, j);
    j = band.dof(twin);
    ++swaps;
  }
}

}  // namespace

BcSpec BcSpec::dirichlet(int order) {
  BcSpec s;
  s.order = order;
  return s;
}

BcSpec BcSpec::neumann(int order) {
  BcSpec s;
  s.plus_kind = s.minus_kind = BcKind::ZeroNeumann;
  s.order = order;
  return s;
}

BcSpec BcSpec::two_sided_dirichlet(int order, OrientationField orientation) {
  BcSpec s;
  s.order = order;
  s.two_sided = true;
  s.orientation = std::move(orientation);
  return s;
}

double BcValues::at(const Vec3& y, SideTag side) const {
  if (side == SideTag::Minus && minus) return minus(y);
  return plus ? plus(y) : 0.0;
}

Vec3 cp_diff(const SparseGrid& grid, const IbcBand& band, int i) { return grid.cp[i] - band.cp_c[i]; }

bool crossing_test(const Vec3& v1, const Vec3& v2) { return v1.dot(v2) < 0.0; }

Vec3 robust_project(const Vec3& v, const Vec3& n_s, const Vec3* t_c) {
  Vec3 out = v - n_s.dot(v) * n_s;
  if (t_c) out -= t_c->dot(out) * (*t_c);
  return out;
}

bool robust_enabled(const BcSpec& spec, const Surface& surface) {
  if (spec.robust >= 0) return spec.robust != 0;
  return surface.dim() == 3 && surface.manifold_dim() == 2;
}

FrameData estimate_frames(const SparseGrid& g, const IbcBand& band, int p, int curve_dim) {
  const int n = g.size();
  FrameData f;
  f.n_s.assign(n, Vec3::Zero());
  f.t_c.assign(n, Vec3::Zero());
  f.has_t.assign(n, 0);

  const int width = stencil_width(p, g.dim);
  // Stencils around cp_C(x_i) for every cached DOF.
  std::vector<int> st_dofs(band.cached_dofs.size() * width);
  std::vector<double> st_w(band.cached_dofs.size() * width);
  std::vector<std::uint8_t> needed(n, 0);
  for (std::size_t c = 0; c < band.cached_dofs.size(); ++c) {
    const int i = band.cached_dofs[c];
    interp_stencil_into(g, band.cp_c[i], p, &st_dofs[c * width], &st_w[c * width]);
    for (int k = 0; k < width; ++k) needed[st_dofs[c * width + k]] = 1;
  }

  // Unoriented normals from the CP-extended Jacobian of cp_S.
  const std::vector<Mat3> raw = cp_jacobians_raw(g);
  std::vector<Vec3> normal(n, Vec3::Zero());
  std::vector<int> need_list;
  for (int j = 0; j < n; ++j) {
    if (needed[j]) need_list.push_back(j);
  }
  std::vector<std::string> degenerate(need_list.size());
#pragma omp parallel
  {
    std::vector<int> dofs(width);
    std::vector<double> w(width);
#pragma omp for schedule(static)
    for (std::size_t t = 0; t < need_list.size(); ++t) {
      const int j = need_list[t];
      interp_stencil_into(g, g.cp[j], p, dofs.data(), w.data());
      Mat3 J = Mat3::Zero();
      for (int k = 0; k < width; ++k) J += w[k] * raw[dofs[k]];
      const SortedEig e = sorted_eig(J, g.dim);
      if (std::abs(e.values[1]) - std::abs(e.values[0]) < kGapTol) {
        std::ostringstream msg;
        msg << "normal eigenvalue gap below " << kGapTol << " at (" << g.position(j).transpose() << ")";
        degenerate[t] = msg.str();
      }
      normal[j] = e.vectors.col(0);
    }
  }
  for (const std::string& m : degenerate) {
    if (!m.empty()) fail(ErrorCode::DegenerateFrame, m);
  }

  // Interpolate to cp_C with local orientation against the stencil anchor,
  // the lexicographically smallest lattice point (entry 0 of the stencil).
  for (std::size_t c = 0; c < band.cached_dofs.size(); ++c) {
    const int i = band.cached_dofs[c];
    const Vec3& anchor = normal[st_dofs[c * width]];
    Vec3 s = Vec3::Zero();
    for (int k = 0; k < width; ++k) {
      const Vec3& v = normal[st_dofs[c * width + k]];
      s += st_w[c * width + k] * (v.dot(anchor) < 0.0 ? Vec3(-v) : v);
    }
    const double nrm = s.norm();
    if (nrm < 1e-12) {
      std::ostringstream msg;
      msg << "interpolated normal vanishes at (" << band.cp_c[i].transpose() << ")";
      fail(ErrorCode::DegenerateFrame, msg.str());
    }
    f.n_s[i] = s / nrm;
  }

  if (curve_dim != 1) return f;
  // Curve tangents from the Jacobian of the cached cp_C.
  for (int i : band.cached_dofs) {
    if (band.at_endpoint[i]) continue;
    Mat3 J = Mat3::Zero();
    bool ok = true;
    for (int a = 0; a < g.dim && ok; ++a) {
      int lo = g.neighbor(i, a, -1), hi = g.neighbor(i, a, 1);
      if (lo >= 0 && !band.cached[lo]) lo = -1;
      if (hi >= 0 && !band.cached[hi]) hi = -1;
      if (lo >= 0 && hi >= 0) {
        J.col(a) = (band.cp_c[hi] - band.cp_c[lo]) / (2.0 * g.dx);
      } else if (hi >= 0) {
        J.col(a) = (band.cp_c[hi] - band.cp_c[i]) / g.dx;
      } else if (lo >= 0) {
        J.col(a) = (band.cp_c[i] - band.cp_c[lo]) / g.dx;
      } else {
        ok = false;
      }
    }
    if (!ok) continue;
    const SortedEig e = sorted_eig(J, g.dim);
    const int top = e.count - 1;
    if (std::abs(e.values[top]) - std::abs(e.values[top - 1]) < kGapTol) continue;
    Vec3 t = e.vectors.col(top);
    // x_i - cp_C(x_i) is normal to C; near the medial axis of C the FD
    // Jacobian mixes far-apart closest points and violates this.
    const Vec3 off = g.position(i) - band.cp_c[i];
    if (off.norm() > 1e-12 && std::abs(t.dot(off)) > kTangentTol * off.norm()) continue;
    t -= t.dot(f.n_s[i]) * f.n_s[i];
    const double nrm = t.norm();
    if (nrm < 1e-8) continue;
    f.t_c[i] = t / nrm;
    f.has_t[i] = 1;
  }
  return f;
}

SideData assign_sides(const SparseGrid& g, const IbcBand& band, const Surface& curve, const BcSpec& spec,
                      const FrameData* frames) {
  SideData s;
  s.global = spec.global_labels();
  if (s.global && !spec.orientation) {
    fail(ErrorCode::OrientationRequired, "two-sided or mixed interior conditions need an orientation field");
  }
  s.robust = frames != nullptr;
  s.oncurve_tol = 0.1 * g.dx * g.dx;
  const int n = g.size();
  s.v_pt.assign(n, Vec3::Zero());
  s.oncurve_pt.assign(n, 0);
  s.label_pt.assign(n, SideTag::Plus);
  s.v_dir.assign(n, Vec3::Zero());
  s.oncurve_dir.assign(n, 0);
  s.end_dir.assign(n, 0);
  s.label_dir.assign(n, SideTag::Plus);
  const bool open = curve.has_boundary();

  const auto project = [&](const Vec3& v, int i) -> Vec3 {
    if (!frames) return v;
    return robust_project(v, frames->n_s[i], frames->has_t[i] ? &frames->t_c[i] : nullptr);
  };

  for (int i : band.cached_dofs) {
    const Vec3 raw = cp_diff(g, band, i);
    s.oncurve_pt[i] = raw.norm() < s.oncurve_tol;
    s.v_pt[i] = project(raw, i);
    if (s.global) s.label_pt[i] = label_of(spec, s.v_pt[i], s.oncurve_pt[i], band.cp_c[i], s.orientation_queries);

    // FD/interpolation director y* = cp_S(x_i).
    const Vec3& y = g.cp[i];
    const CpResult c = curve.closest_point(y);
    const Vec3 raw_dir = y - c.cp;
    s.oncurve_dir[i] = raw_dir.norm() < s.oncurve_tol;
    s.v_dir[i] = project(raw_dir, i);
    if (open) s.end_dir[i] = (c.cp - curve.boundary_closest_point(y).cp).norm() <= kEndTol;
    if (s.global) s.label_dir[i] = label_of(spec, s.v_dir[i], s.oncurve_dir[i], c.cp, s.orientation_queries);
  }
  s.band_side.resize(band.size());
  for (int k = 0; k < band.size(); ++k) s.band_side[k] = s.label_pt[band.base[k]];
  return s;
}

bool across(const IbcBand& band, const SideData& sides, const Director& d, int j) {
  if (!band.cached[j]) return false;
  if (d.at_end || band.at_endpoint[j]) return false;
  if (sides.global) return d.label != sides.label_pt[j];
  // Points on C can be assigned to either side: treat them as same side.
  if (sides.oncurve_pt[j]) return false;
  return crossing_test(d.v, sides.v_pt[j]);
}

bool use_twin(const IbcBand& band, const SideData& sides, const Director& d, int j) {
  if (!sides.global && sides.oncurve_pt[j] && band.cached[j]) {
    return !d.oncurve && !d.at_end && !band.at_endpoint[j] && band.band_of[j] >= 0;
  }
  return across(band, sides, d, j);
}

Director point_director(const IbcBand& band, const SideData& sides, int i) {
  return {sides.v_pt[i], sides.oncurve_pt[i] != 0, band.at_endpoint[i] != 0, sides.label_pt[i]};
}

Director fd_director(const SideData& sides, int i) {
  return {sides.v_dir[i], sides.oncurve_dir[i] != 0, sides.end_dir[i] != 0, sides.label_dir[i]};
}

void rewire_stencils(SparseOperator& E, SparseOperator& L, const SparseGrid& g, const IbcBand& band,
                     const SideData& sides, std::vector<int>* swapped) {
  const int n = band.n_pde;
  const int nb = band.size();
  const int total = band.total();
  if (E.n_rows != n || L.n_rows != n) fail(ErrorCode::DimensionMismatch, "rewire_stencils expects plain operators");
  std::vector<int> count(total, 0);

  // E rows: swap columns across the director to band ids.
  for (int i : band.cached_dofs) {
    const Director d = fd_director(sides, i);
    for (int k = E.row_ptr[i]; k < E.row_ptr[i + 1]; ++k) {
      const int j = E.cols[k];
      if (!use_twin(band, sides, d, j)) continue;
      const int twin = band.band_of[j];
      if (twin < 0) missing_twin(g, i, j);
      E.cols[k] = band.dof(twin);
      ++count[i];
    }
  }
  E.n_cols = total;

  SparseOperator out;
  out.n_cols = total;
  out.row_ptr.reserve(total + 1);
  out.cols.reserve(L.nnz() + static_cast<std::size_t>(nb) * (2 * g.dim + 1));
  out.vals.reserve(out.cols.capacity());
  std::vector<int> c;
  std::vector<double> w;

  // Rewired PDE row i, also reused by band DOFs in the endpoint subset.
  const auto pde_row = [&](int i, std::vector<int>& cols, std::vector<double>& vals) -> int {
    cols.clear();
    vals.clear();
    int swaps = 0;
    int centre = -1;
    double dropped = 0.0;
    const bool active = band.cached[i];
    const Director d = active ? fd_director(sides, i) : Director{};
    for (int k = L.row_ptr[i]; k < L.row_ptr[i + 1]; ++k) {
      int j = L.cols[k];
      if (j == i) centre = static_cast<int>(cols.size());
      if (active && j != i && use_twin(band, sides, d, j)) {
        const int twin = band.band_of[j];
        if (twin < 0) {
          // Far from C the band may not reach; keep the zero row sum.
          dropped += L.vals[k];
          continue;
        }
        j = band.dof(twin);
        ++swaps;
      }
      cols.push_back(j);
      vals.push_back(L.vals[k]);
    }
    if (centre >= 0) vals[centre] += dropped;
    return swaps;
  };

  for (int i = 0; i < n; ++i) {
    count[i] += pde_row(i, c, w);
    out.push_row(c, w);
  }

  for (int k = 0; k < nb; ++k) {
    const int i = band.base[k];
    const int alpha = band.dof(k);
    if (band.in_endpoint_subset(k)) {
      count[alpha] += pde_row(i, c, w);
      for (int& j : c) {
        if (j == i) j = alpha;
      }
      out.push_row(c, w);
      continue;
    }
    // Band FD row: same stencil with band ids; across points use PDE ids;
    // neighbours without a twin are dropped.
    c.clear();
    w.clear();
    const Director d = fd_director(sides, i);
    int centre = -1;
    double dropped = 0.0;
    for (int q = L.row_ptr[i]; q < L.row_ptr[i + 1]; ++q) {
      const int j = L.cols[q];
      if (j == i) {
        centre = static_cast<int>(c.size());
        c.push_back(alpha);
        w.push_back(L.vals[q]);
      } else if (across(band, sides, d, j)) {
        c.push_back(j);
        w.push_back(L.vals[q]);
        ++count[alpha];
      } else if (band.band_of[j] >= 0) {
        c.push_back(band.dof(band.band_of[j]));
        w.push_back(L.vals[q]);
      } else {
        dropped += L.vals[q];
      }
    }
    w[centre] += dropped;
    out.push_row(c, w);
  }
  out.n_rows = total;
  L = std::move(out);
  if (swapped) *swapped = std::move(count);
}

BandBc bc_extension_rows(SparseOperator& E, const SparseGrid& g, const IbcBand& band, const SideData& sides,
                         const Surface& surface, const Surface& curve, const BcSpec& spec, int p,
                         std::vector<int>* swapped) {
  if (spec.order != 1 && spec.order != 2) fail(ErrorCode::InvalidConfig, "interior condition order must be 1 or 2");
  const int nb = band.size();
  if (E.n_rows != band.n_pde) fail(ErrorCode::DimensionMismatch, "bc_extension_rows expects PDE rows only");
  BandBc bc;
  bc.scale.assign(nb, 0.0);
  bc.point.assign(nb, Vec3::Zero());
  bc.serving.assign(nb, SideTag::Plus);
  const int width = stencil_width(p, g.dim);
  std::vector<int> dofs(width);
  std::vector<double> w(width);
  std::vector<int> c;
  std::vector<double> v;

  for (int k = 0; k < nb; ++k) {
    const int i = band.base[k];
    const int alpha = band.dof(k);
    if (band.in_endpoint_subset(k)) {
      c.assign(E.cols.begin() + E.row_ptr[i], E.cols.begin() + E.row_ptr[i + 1]);
      v.assign(E.vals.begin() + E.row_ptr[i], E.vals.begin() + E.row_ptr[i + 1]);
      E.push_row(c, v);
      continue;
    }
    // The band DOF stands in for the other side of S_perp.
    const SideTag serving = opposite(sides.band_side[k]);
    const BcKind kind = serving == SideTag::Plus ? spec.plus_kind : spec.minus_kind;
    bc.serving[k] = serving;
    bc.point[k] = band.cp_c[i];

    if (kind == BcKind::Dirichlet && spec.order == 1) {
      bc.scale[k] = 1.0;
      E.push_row({}, {});
      continue;
    }
    const Vec3 x = g.position(i);
    const Vec3 query = spec.order == 1 ? band.cp_c[i] : reflected_query_about_curve(surface, curve, x);
    dofs.resize(width);
    w.resize(width);
    interp_stencil_into(g, query, p, dofs.data(), w.data());
    int swaps = 0;
    rewire_band_stencil(g, band, sides, point_director(band, sides, i), alpha, dofs, swaps);
    if (swapped) (*swapped)[alpha] += width - swaps;
    if (kind == BcKind::Dirichlet) {
      bc.scale[k] = 2.0;
      for (double& x_w : w) x_w = -x_w;
    }
    E.push_row(dofs, w);
  }
  E.n_rows = band.total();
  E.n_cols = band.total();
  return bc;
}

std::vector<double> CpmSystem::extension_constants(const BcValues& g) const {
  std::vector<double> e(n_total, 0.0);
  for (std::size_t k = 0; k < bc.scale.size(); ++k) {
    if (bc.scale[k] != 0.0) e[n_pde + k] = bc.scale[k] * g.at(bc.point[k], bc.serving[k]);
  }
  return e;
}

std::vector<double> CpmSystem::fixed_values(const BcValues& g) const {
  std::vector<double> out(n_total, 0.0);
  for (int i = 0; i < static_cast<int>(fixed.size()); ++i) {
    if (fixed[i]) out[i] = g.at(fixed_point[i], SideTag::Plus);
  }
  return out;
}

std::vector<double> CpmSystem::surface_values(std::span<const double> u, std::span<const double> e) const {
  std::vector<double> out(n_pde);
  for (int i = 0; i < n_pde; ++i) out[i] = E.row_dot(i, u) + (e.empty() ? 0.0 : e[i]);
  return out;
}

CpmSystem build_plain_system(const SparseGrid& grid, int p) {
  CpmSystem s;
  s.n_pde = s.n_total = grid.size();
  s.p = p;
  s.grid = &grid;
  s.E = build_extension(grid, p);
  s.L = build_laplacian(grid);
  s.swapped.assign(s.n_total, 0);
  return s;
}

CpmSystem build_ibc_system(const SparseGrid& grid, SurfacePtr surface, SurfacePtr curve, const BcSpec& spec, int p) {
  if (spec.order != 1 && spec.order != 2) fail(ErrorCode::InvalidConfig, "interior condition order must be 1 or 2");
  auto ctx = std::make_shared<IbcContext>();
  ctx->grid = &grid;
  ctx->surface = surface;
  ctx->curve = curve;
  ctx->spec = spec;
  ctx->p = p;
  ctx->band = build_ibc_band(grid, *surface, *curve);
  const bool robust = robust_enabled(spec, *surface);
  if (robust) ctx->frames = estimate_frames(grid, ctx->band, p, curve->manifold_dim());
  ctx->sides = assign_sides(grid, ctx->band, *curve, spec, robust ? &ctx->frames : nullptr);
  ctx->sides.robust = robust;

  CpmSystem s;
  s.n_pde = grid.size();
  s.n_total = ctx->band.total();
  s.p = p;
  s.grid = &grid;
  s.E = build_extension(grid, p);
  s.L = build_laplacian(grid);
  rewire_stencils(s.E, s.L, grid, ctx->band, ctx->sides, &s.swapped);
  s.bc = bc_extension_rows(s.E, grid, ctx->band, ctx->sides, *surface, *curve, spec, p, &s.swapped);
  s.ibc = std::move(ctx);
  return s;
}

std::vector<int> baseline_nearest_point(const SparseGrid& grid, const Surface& curve) {
  std::vector<int> out;
  for (const Vec3& y : curve.sample(0.5 * grid.dx)) {
    const int i = grid.find(grid.nearest_index(y));
    if (i >= 0) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int> baseline_ball(const SparseGrid& grid, const Surface& curve, double radius) {
  std::vector<int> out;
  for (int i = 0; i < grid.size(); ++i) {
    try {
      if (curve.closest_point(grid.position(i)).dist <= radius) out.push_back(i);
    } catch (const AmbiguousClosestPoint& e) {
      if (e.dist() <= radius) out.push_back(i);
    }
  }
  return out;
}

CpmSystem build_baseline_system(const SparseGrid& grid, const Surface& curve, const BcSpec& spec,
                                BaselineMethod method, int p, double radius) {
  if (spec.two_sided) fail(ErrorCode::TwoSidedUnsupported, "baselines impose a single Dirichlet value");
  if (spec.plus_kind != BcKind::Dirichlet || spec.minus_kind != BcKind::Dirichlet) {
    fail(ErrorCode::InvalidConfig, "baselines support Dirichlet conditions only");
  }
  CpmSystem s = build_plain_system(grid, p);
  const std::vector<int> ids = method == BaselineMethod::NearestPoint
                                   ? baseline_nearest_point(grid, curve)
                                   : baseline_ball(grid, curve, radius > 0.0 ? radius : grid.radius);
  s.fixed.assign(s.n_total, 0);
  s.fixed_point.assign(s.n_total, Vec3::Zero());
  for (int i : ids) {
    s.fixed[i] = 1;
    s.fixed_point[i] = curve.closest_point(grid.position(i)).cp;
  }
  return s;
}

std::vector<double> interpolate_at_ibc(const CpmSystem& sys, std::span<const double> u, std::span<const Vec3> targets) {
  if (static_cast<int>(u.size()) != sys.n_total) fail(ErrorCode::DimensionMismatch, "field size does not match system");
  if (!sys.ibc) return interpolate_at(*sys.grid, u, targets, sys.p);
  const IbcContext& ctx = *sys.ibc;
  const SparseGrid& g = *ctx.grid;
  const IbcBand& band = ctx.band;
  const SideData& sides = ctx.sides;
  const int width = stencil_width(sys.p, g.dim);
  std::vector<int> dofs(width);
  std::vector<double> w(width);
  std::vector<double> out(targets.size());
  const double audit = 2.0 * band.radius;
  const bool open = ctx.curve->has_boundary();

  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Vec3& y = targets[t];
    interp_stencil_into(g, y, sys.p, dofs.data(), w.data());
    bool near = false;
    for (int k = 0; k < width && !near; ++k) near = band.cached[dofs[k]] != 0;
    Director d;
    if (near) {
      const CpResult c = ctx.curve->closest_point(y);
      near = c.dist < audit;
      Vec3 v = y - c.cp;
      d.oncurve = v.norm() < sides.oncurve_tol;
      if (sides.robust) {
        // Frames of the nearest cached grid point.
        int best = -1;
        double best_d = 0.0;
        for (int k = 0; k < width; ++k) {
          const int j = dofs[k];
          if (!band.cached[j]) continue;
          const double dd = (g.position(j) - y).squaredNorm();
          if (best < 0 || dd < best_d) best = j, best_d = dd;
        }
        v = robust_project(v, ctx.frames.n_s[best], ctx.frames.has_t[best] ? &ctx.frames.t_c[best] : nullptr);
      }
      d.v = v;
      if (open) d.at_end = (c.cp - ctx.curve->boundary_closest_point(y).cp).norm() <= kEndTol;
      if (sides.global) {
        std::size_t unused = 0;
        d.label = label_of(ctx.spec, v, d.oncurve, c.cp, unused);
      }
    }
    double s = 0.0;
    for (int k = 0; k < width; ++k) {
      int j = dofs[k];
      if (near && use_twin(band, sides, d, j)) {
        if (band.band_of[j] < 0) missing_twin(g, -1, j);
        j = band.dof(band.band_of[j]);
      }
      s += w[k] * u[j];
    }
    out[t] = s;
  }
  return out;
}

void write_side_csv(const CpmSystem& sys, std::ostream& out) {
  out << "dof,kind,base,side,swapped\n";
  const auto side_name = [](SideTag s) { return s == SideTag::Plus ? "plus" : s == SideTag::Minus ? "minus" : "oncurve"; };
  for (int i = 0; i < sys.n_total; ++i) {
    const bool pde = i < sys.n_pde;
    const int base = pde ? i : sys.band_base(i - sys.n_pde);
    std::string side = "none";
    if (sys.ibc) {
      const IbcContext& ctx = *sys.ibc;
      if (!pde) {
        side = side_name(ctx.sides.band_side[i - sys.n_pde]);
      } else if (ctx.band.cached[i]) {
        side = ctx.sides.oncurve_pt[i] ? "oncurve" : side_name(ctx.sides.label_pt[i]);
        if (!ctx.sides.global && !ctx.sides.oncurve_pt[i]) side = "local";
      }
    }
    out << i << ',' << (pde ? "pde" : "band") << ',' << base << ',' << side << ','
        << (sys.swapped.empty() ? 0 : sys.swapped[i]) << '\n';
  }
}

}  // namespace cpm
