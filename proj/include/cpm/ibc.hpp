#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "cpm/discretize.hpp"
#include "cpm/sparse_operator.hpp"
#include "cpm/surface.hpp"
#include "cpm/tube_grid.hpp"

namespace cpm {

enum class SideTag : std::uint8_t { Plus, Minus, OnCurve };
enum class BcKind { Dirichlet, ZeroNeumann };

inline SideTag opposite(SideTag s) { return s == SideTag::Minus ? SideTag::Plus : SideTag::Minus; }

using CurveFunction = std::function<double(const Vec3&)>;
/// Oriented normal n_{S_perp}(y) of the virtual normal surface at y on C.
using OrientationField = std::function<Vec3(const Vec3&)>;

struct BcSpec {
  BcKind plus_kind = BcKind::Dirichlet;
  BcKind minus_kind = BcKind::Dirichlet;
  int order = 1;
  /// Different Dirichlet values on the two sides.
  bool two_sided = false;
  OrientationField orientation;
  /// -1: on in R^3 for surfaces, off otherwise; 0/1 force.
  int robust = -1;

  bool mixed() const { return plus_kind != minus_kind; }
  bool global_labels() const { return two_sided || mixed(); }

  static BcSpec dirichlet(int order);
  static BcSpec neumann(int order);
  static BcSpec two_sided_dirichlet(int order, OrientationField orientation);
};

/// Dirichlet data per side. `minus` defaults to `plus` when empty.
struct BcValues {
  CurveFunction plus;
  CurveFunction minus;
  double at(const Vec3& y, SideTag side) const;
};

/// cp_S(x_i) - cp_C(x_i) for a cached DOF.
Vec3 cp_diff(const SparseGrid& grid, const IbcBand& band, int i);
/// True iff v1 . v2 < 0.
bool crossing_test(const Vec3& v1, const Vec3& v2);
/// (I - n n^T - t t^T) v, or (I - n n^T) v when t is null.
Vec3 robust_project(const Vec3& v, const Vec3& n_s, const Vec3* t_c);

/// Frames at cp_C(x_i) for cached DOFs, indexed by PDE DOF.
struct FrameData {
  std::vector<Vec3> n_s;
  std::vector<Vec3> t_c;  // orthogonalized against n_s
  std::vector<std::uint8_t> has_t;
};

/// Normals from the near-null eigenvector of the extended cp_S Jacobian,
/// interpolated to cp_C(x_i) with local orientation against the smallest
/// lattice index of the stencil; tangents from the dominant eigenvector of the
/// cp_C Jacobian (absent for point curves and at endpoints).
FrameData estimate_frames(const SparseGrid& grid, const IbcBand& band, int p, int curve_dim);

/// Side information for every cached DOF (indexed by PDE DOF).
struct SideData {
  bool global = false;
  bool robust = false;
  double oncurve_tol = 0.0;
  // Grid point x_i: cp_{S-C}(x_i), optionally projected.
  std::vector<Vec3> v_pt;
  std::vector<std::uint8_t> oncurve_pt;
  std::vector<SideTag> label_pt;
  // FD director y* = cp_S(x_i): cp_S(x_i) - cp_C(cp_S(x_i)).
  std::vector<Vec3> v_dir;
  std::vector<std::uint8_t> oncurve_dir;
  std::vector<std::uint8_t> end_dir;
  std::vector<SideTag> label_dir;
  /// Director side of each band DOF.
  std::vector<SideTag> band_side;
  std::size_t orientation_queries = 0;
};

SideData assign_sides(const SparseGrid& grid, const IbcBand& band, const Surface& curve, const BcSpec& spec,
                      const FrameData* frames);

/// Whether robust projected tests apply for this surface/curve pair.
bool robust_enabled(const BcSpec& spec, const Surface& surface);

/// Side reference used when deciding whether a stencil point is across S_perp.
struct Director {
  Vec3 v = Vec3::Zero();
  bool oncurve = false;
  bool at_end = false;
  SideTag label = SideTag::Plus;
};

/// True when grid point j lies across S_perp from the director.
bool across(const IbcBand& band, const SideData& sides, const Director& d, int j);
/// Whether a PDE-side stencil entry j is read from its band twin: across, or,
/// with local labels, a point on C seen from a director off C.
bool use_twin(const IbcBand& band, const SideData& sides, const Director& d, int j);

Director point_director(const IbcBand& band, const SideData& sides, int i);
Director fd_director(const SideData& sides, int i);

/// Rewires PDE rows of E and L, and appends band FD rows to L. E keeps N_S
/// rows but gets N_S + N_C columns; L becomes square of size N_S + N_C.
/// `swapped` (optional) receives the per-row count of changed column ids.
void rewire_stencils(SparseOperator& E, SparseOperator& L, const SparseGrid& grid, const IbcBand& band,
                     const SideData& sides, std::vector<int>* swapped = nullptr);

/// Boundary data attached to each band DOF: the affine extension row is
/// (E u)_alpha = scale * g(point, serving) + (linear part stored in E).
struct BandBc {
  std::vector<double> scale;
  std::vector<Vec3> point;
  std::vector<SideTag> serving;
};

/// Appends one E row per band DOF (Dirichlet-1/2, Neumann-1/2, or a copy of
/// the PDE row inside the endpoint subset).
BandBc bc_extension_rows(SparseOperator& E, const SparseGrid& grid, const IbcBand& band, const SideData& sides,
                         const Surface& surface, const Surface& curve, const BcSpec& spec, int p,
                         std::vector<int>* swapped = nullptr);

/// Everything needed to interpolate with rewiring at arbitrary points.
struct IbcContext {
  const SparseGrid* grid = nullptr;
  IbcBand band;
  SurfacePtr surface;
  SurfacePtr curve;
  BcSpec spec;
  FrameData frames;
  SideData sides;
  int p = 3;
};

struct CpmSystem {
  int n_pde = 0;
  int n_total = 0;
  int p = 3;
  const SparseGrid* grid = nullptr;
  SparseOperator E;
  SparseOperator L;
  BandBc bc;
  std::vector<std::uint8_t> fixed;  // identity rows (baselines)
  std::vector<Vec3> fixed_point;    // where g is evaluated for fixed rows
  std::vector<int> swapped;         // rewired columns per row (E and L rows combined)
  std::shared_ptr<const IbcContext> ibc;

  /// Constant part e of the affine extension (size n_total).
  std::vector<double> extension_constants(const BcValues& g) const;
  /// Values of fixed rows (0 where not fixed).
  std::vector<double> fixed_values(const BcValues& g) const;
  /// Surface values at the PDE DOFs: (E u + e)_i.
  std::vector<double> surface_values(std::span<const double> u, std::span<const double> e) const;
  int band_base(int k) const { return ibc ? ibc->band.base[k] : -1; }
};

/// Plain CPM operators without interior conditions.
CpmSystem build_plain_system(const SparseGrid& grid, int p);

/// Full IBC pipeline: band, frames, sides, rewiring and band rows.
CpmSystem build_ibc_system(const SparseGrid& grid, SurfacePtr surface, SurfacePtr curve, const BcSpec& spec, int p);

enum class BaselineMethod { NearestPoint, Ball };

/// Fixed-DOF list for the first-order baselines.
std::vector<int> baseline_nearest_point(const SparseGrid& grid, const Surface& curve);
std::vector<int> baseline_ball(const SparseGrid& grid, const Surface& curve, double radius);

/// Plain operators plus identity rows at the baseline's fixed DOFs.
CpmSystem build_baseline_system(const SparseGrid& grid, const Surface& curve, const BcSpec& spec,
                                BaselineMethod method, int p, double radius = -1.0);

/// Interpolates a solution (PDE and band DOFs) at surface points. Stencils
/// near C are directed by the target itself, so values come from its side.
std::vector<double> interpolate_at_ibc(const CpmSystem& sys, std::span<const double> u, std::span<const Vec3> targets);

/// Debug CSV: dof, kind (pde/band), base, side, swapped.
void write_side_csv(const CpmSystem& sys, std::ostream& out);

}  // namespace cpm
