#pragma once

#include <array>
#include <memory>
#include <vector>

#include "cpm/bvh.hpp"
#include "cpm/surface.hpp"

namespace cpm {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

struct MeshCp {
  Vec3 cp = Vec3::Zero();
  double dist = 0.0;
  int triangle = -1;
  Vec3 bary = Vec3::Zero();  // barycentric coordinates of cp in `triangle`
};

/// Exact closest point on triangle (a, b, c); also returns barycentric weights.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary = nullptr);
Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b, double* t = nullptr);

class MeshSurface : public Surface {
 public:
  explicit MeshSurface(TriangleMesh mesh, int dim = 3);

  int dim() const override { return dim_; }
  int manifold_dim() const override { return 2; }
  CpResult closest_point(const Vec3& x) const override;
  bool has_boundary() const override { return !boundary_edges_.empty(); }
  CpResult boundary_closest_point(const Vec3& x) const override;
  Vec3 sample_point() const override { return mesh_.vertices.front(); }
  std::string name() const override { return "mesh"; }

  MeshCp closest_point_detailed(const Vec3& x) const;
  /// Brute-force scan over every triangle (test oracle).
  MeshCp closest_point_brute_force(const Vec3& x) const;

  const TriangleMesh& mesh() const { return mesh_; }
  const std::vector<std::array<int, 2>>& boundary_edges() const { return boundary_edges_; }

 private:
  TriangleMesh mesh_;
  int dim_;
  Bvh tri_bvh_;
  Bvh edge_bvh_;
  std::vector<std::array<int, 2>> boundary_edges_;
};

std::shared_ptr<const MeshSurface> make_mesh(TriangleMesh mesh, int dim = 3);

/// Subdivided icosahedron projected to the sphere of given radius.
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0);
/// Triangulated Moebius strip with centre-circle radius R and half width w.
TriangleMesh make_mobius_mesh(int n_around, int n_across, double R, double w);

}  // namespace cpm
