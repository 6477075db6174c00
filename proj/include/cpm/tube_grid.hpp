#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpm/surface.hpp"
#include "cpm/types.hpp"

namespace cpm {

/// r = dx * sqrt((d-1)((p+1)/2)^2 + (q+(p+1)/2)^2)
double tube_radius(double dx, int d, int p, int q);

/// Sparse lattice tube around a surface. DOFs are ordered lexicographically
/// by lattice index, so the layout does not depend on the BFS seeds.
struct SparseGrid {
  int dim = 3;
  double dx = 0.0;
  Vec3 origin = Vec3::Zero();
  int p = 3;
  int q = 1;
  double radius = 0.0;

  std::vector<LatticeIndex> index;
  std::vector<Vec3> cp;
  std::vector<double> dist;
  std::vector<std::uint8_t> has_boundary_cp;
  std::vector<Vec3> cp_boundary;
  std::vector<std::uint8_t> in_boundary_subset;
  std::vector<std::uint8_t> edge_of_tube;
  /// Face neighbours: neighbors[2d*i + 2*axis + (dir > 0)], -1 when absent.
  std::vector<int> neighbors;
  std::unordered_map<std::uint64_t, int> dof_of;

  std::size_t visited_cells = 0;
  std::size_t cp_queries = 0;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(index.size()); }
  Vec3 position(const LatticeIndex& k) const {
    return origin + dx * Vec3(k[0], k[1], k[2]);
  }
  Vec3 position(int i) const { return position(index[i]); }
  int find(const LatticeIndex& k) const {
    const auto it = dof_of.find(lattice_key(k));
    return it == dof_of.end() ? -1 : it->second;
  }
  LatticeIndex nearest_index(const Vec3& x) const;
  int neighbor(int i, int axis, int dir) const { return neighbors[2 * dim * i + 2 * axis + (dir > 0 ? 1 : 0)]; }
};

/// BFS over face-neighbour lattice cells starting from the seeds (or the
/// surface's own sample point). Lattice origin is 0, i.e. points are dx*Z^d.
SparseGrid build_tube(const Surface& surface, double dx, int p, int q, const std::vector<Vec3>& seeds = {});

/// Recomputes cp_dS and the boundary-subset flags for an open surface.
void mark_boundary_subsets(SparseGrid& grid, const Surface& surface);

/// Grid points near an interior curve C. The cp_C cache covers every PDE DOF
/// with dist_C < 2r; band DOFs are the ones with dist_C <= r and get ids
/// n_pde + k.
struct IbcBand {
  int n_pde = 0;
  double radius = 0.0;
  std::vector<int> base;     // band k -> colocated PDE DOF
  std::vector<int> band_of;  // PDE DOF -> band k, or -1

  // Per PDE DOF, meaningful where `cached` is set.
  std::vector<std::uint8_t> cached;
  std::vector<Vec3> cp_c;
  std::vector<double> dist_c;
  std::vector<std::uint8_t> at_endpoint;  // cp_C(x) == cp_dC(x)
  std::vector<int> cached_dofs;

  std::size_t cp_queries = 0;

  int size() const { return static_cast<int>(base.size()); }
  int dof(int k) const { return n_pde + k; }
  int total() const { return n_pde + size(); }
  bool in_endpoint_subset(int k) const { return at_endpoint[base[k]] != 0; }
};

/// Validates that C lies on S (samples within 1e-6) and builds the band.
IbcBand build_ibc_band(const SparseGrid& grid, const Surface& surface, const Surface& curve);

/// Plain-text dump: one line per DOF with lattice index, cp, dist and flags.
void write_grid_table(const SparseGrid& grid, std::ostream& out);
SparseGrid read_grid_table(std::istream& in);
/// "dx,n_pde,n_band" rows.
void write_dof_counts_csv(const std::vector<std::array<double, 3>>& rows, std::ostream& out);

}  // namespace cpm
