#pragma once

#include <span>
#include <vector>

#include "cpm/sparse_operator.hpp"
#include "cpm/tube_grid.hpp"

namespace cpm {

struct StencilRef {
  std::vector<int> dof_ids;
  std::vector<double> weights;
  std::vector<LatticeIndex> cells;
  Vec3 director = Vec3::Zero();
};

/// Lagrange basis values of degree p at local coordinate s on nodes 0..p,
/// in barycentric form. Exactly 1/0 when s coincides with a node.
void lagrange_weights_1d(int p, double s, double* w);

/// Base lattice cell of the (p+1)^d interpolation cube around `query`.
LatticeIndex interp_base(const SparseGrid& grid, const Vec3& query, int p);

/// Tensor-product barycentric Lagrange stencil. Stencil points are listed in
/// lexicographic lattice order, so entry 0 is the smallest index.
StencilRef interp_stencil(const SparseGrid& grid, const Vec3& query, int p);

/// Allocation-free variant: fills (p+1)^d entries and returns the count.
int interp_stencil_into(const SparseGrid& grid, const Vec3& query, int p, int* dofs, double* weights);

/// One row per PDE DOF, interpolating at cp_S(x_k).
SparseOperator build_extension(const SparseGrid& grid, int p);

/// Second-order hyper-cross Laplacian. DOFs at the tube edge keep only the
/// neighbours that exist, with the centre weight adjusted to a zero row sum.
SparseOperator build_laplacian(const SparseGrid& grid);

/// diag(L) u + (L - diag(L)) (E u).
std::vector<double> apply_stabilized(const SparseOperator& L, const SparseOperator& E, std::span<const double> u);

/// Per-DOF closest-point Jacobians by centred differences of the stored cp_S
/// (one-sided where a neighbour is missing).
std::vector<Mat3> cp_jacobians_raw(const SparseGrid& grid);

/// Closest-point extension of a per-DOF matrix field through E.
std::vector<Mat3> extend_matrices(const SparseOperator& E, const std::vector<Mat3>& raw);

/// Tangent-space projectors built from the eigenvectors of the extended cp
/// Jacobian: eigenvalues with |lambda| >= 0.5 are tangent directions.
struct TangentFrames {
  std::vector<Mat3> projector;
  std::vector<Vec3> normal;  // near-null eigenvector (unit, unoriented)
};
TangentFrames tangent_frames(const SparseGrid& grid, const SparseOperator& E);

/// Centred differences of an already extended field, projected onto the
/// tangent space and normalized. Vanishing gradients give the zero vector.
/// Edge-of-tube DOFs get the zero vector (they never enter interpolation).
std::vector<Vec3> surface_gradient_normalized(const SparseGrid& grid, std::span<const double> u,
                                              const TangentFrames& frames);

/// Centred-difference divergence of a vector field; 0 on edge-of-tube DOFs.
std::vector<double> divergence_centered(const SparseGrid& grid, std::span<const Vec3> X);

/// Plain interpolation of a PDE-DOF field at arbitrary points.
std::vector<double> interpolate_at(const SparseGrid& grid, std::span<const double> u, std::span<const Vec3> targets,
                                   int p);

/// f = -Delta_S u + c u for u = x1 x2 on the Dziuk surface, from the level-set
/// identities. Throws OffSurface when |phi(y)| > 1e-8.
double manufactured_rhs_dziuk(const Vec3& y, double c = 1.0);

}  // namespace cpm
