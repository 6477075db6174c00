#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cpm/errors.hpp"
#include "cpm/mesh.hpp"

namespace cpm {

Vec3 closest_point_on_segment(const Vec3& p, const Vec3& a, const Vec3& b, double* t_out) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (t_out) *t_out = t;
  return a + t * ab;
}

// Region-based projection (Ericson, Real-Time Collision Detection 5.1.5).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary) {
  const auto out = [&](double u, double v, double w) {
    if (bary) *bary = Vec3(u, v, w);
    return Vec3(u * a + v * b + w * c);
  };
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return out(1, 0, 0);
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return out(0, 1, 0);
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return out(1 - v, v, 0);
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return out(0, 0, 1);
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return out(1 - w, 0, w);
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return out(0, 1 - w, w);
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return out(1 - v - w, v, w);
}

MeshSurface::MeshSurface(TriangleMesh mesh, int dim) : mesh_(std::move(mesh)), dim_(dim) {
  if (mesh_.vertices.empty() || mesh_.triangles.empty()) fail(ErrorCode::EmptyMesh, "mesh has no triangles");
  const int nv = static_cast<int>(mesh_.vertices.size());
  std::vector<Bvh::Box> boxes;
  boxes.reserve(mesh_.triangles.size());
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& t : mesh_.triangles) {
    Bvh::Box box;
    for (int k = 0; k < 3; ++k) {
      if (t[k] < 0 || t[k] >= nv) fail(ErrorCode::ParseError, "triangle references a missing vertex");
      box.extend(mesh_.vertices[t[k]]);
      const int a = t[k], b = t[(k + 1) % 3];
      ++edge_count[{std::min(a, b), std::max(a, b)}];
    }
    boxes.push_back(box);
  }
  tri_bvh_.build(boxes);
  std::vector<Bvh::Box> edge_boxes;
  for (const auto& [edge, count] : edge_count) {
    if (count != 1) continue;
    boundary_edges_.push_back({edge.first, edge.second});
    Bvh::Box box(mesh_.vertices[edge.first]);
    box.extend(mesh_.vertices[edge.second]);
    edge_boxes.push_back(box);
  }
  edge_bvh_.build(edge_boxes);
}

MeshCp MeshSurface::closest_point_detailed(const Vec3& x) const {
  const auto tri_cp = [&](int k, Vec3* bary) {
    const auto& t = mesh_.triangles[k];
    return closest_point_on_triangle(x, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]], bary);
  };
  const auto [best, d2] = tri_bvh_.nearest(x, [&](int k) { return (x - tri_cp(k, nullptr)).squaredNorm(); });
  MeshCp r;
  r.triangle = best;
  r.cp = tri_cp(best, &r.bary);
  r.dist = (x - r.cp).norm();
  return r;
}

MeshCp MeshSurface::closest_point_brute_force(const Vec3& x) const {
  MeshCp r;
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(mesh_.triangles.size()); ++k) {
    const auto& t = mesh_.triangles[k];
    Vec3 bary;
    const Vec3 cp = closest_point_on_triangle(x, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]], &bary);
    const double d = (x - cp).squaredNorm();
    if (d < best) {
      best = d;
      r.cp = cp;
      r.bary = bary;
      r.triangle = k;
    }
  }
  r.dist = std::sqrt(best);
  return r;
}

CpResult MeshSurface::closest_point(const Vec3& x) const {
  const MeshCp r = closest_point_detailed(x);
  return {r.cp, r.dist, true};
}

CpResult MeshSurface::boundary_closest_point(const Vec3& x) const {
  if (boundary_edges_.empty()) Surface::boundary_closest_point(x);
  const auto seg_cp = [&](int k) {
    return closest_point_on_segment(x, mesh_.vertices[boundary_edges_[k][0]], mesh_.vertices[boundary_edges_[k][1]]);
  };
  const auto [best, d2] = edge_bvh_.nearest(x, [&](int k) { return (x - seg_cp(k)).squaredNorm(); });
  const Vec3 cp = seg_cp(best);
  return {cp, (x - cp).norm(), true};
}

std::shared_ptr<const MeshSurface> make_mesh(TriangleMesh mesh, int dim) {
  return std::make_shared<MeshSurface>(std::move(mesh), dim);
}

TriangleMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v.normalize();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    const auto midpoint = [&](int a, int b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const int id = static_cast<int>(m.vertices.size()) - 1;
      mid[key] = id;
      return id;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& tri : m.triangles) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriangleMesh make_mobius_mesh(int n_around, int n_across, double R, double w) {
  TriangleMesh m;
  for (int i = 0; i < n_around; ++i) {
    const double u = 2.0 * std::numbers::pi * i / n_around;
    for (int j = 0; j <= n_across; ++j) {
      const double v = -w + 2.0 * w * j / n_across;
      m.vertices.emplace_back((R + v * std::cos(u / 2)) * std::cos(u), (R + v * std::cos(u / 2)) * std::sin(u),
                              v * std::sin(u / 2));
    }
  }
  const int cols = n_across + 1;
  for (int i = 0; i < n_around; ++i) {
    for (int j = 0; j < n_across; ++j) {
      const int a = i * cols + j, b = i * cols + j + 1;
      int c, d;
      if (i + 1 < n_around) {
        c = (i + 1) * cols + j;
        d = (i + 1) * cols + j + 1;
      } else {
        // The strip closes with a half twist: v maps to -v.
        c = n_across - j;
        d = n_across - j - 1;
      }
      m.triangles.push_back({a, c, b});
      m.triangles.push_back({b, c, d});
    }
  }
  return m;
}

}  // namespace cpm
