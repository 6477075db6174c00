#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Geometry>

#include "cpm/types.hpp"

namespace cpm {

/// Bounding volume hierarchy over axis-aligned boxes with a nearest-primitive
/// query. Primitive distances come from a caller-supplied functor so the same
/// tree serves triangles and segments.
class Bvh {
 public:
  using Box = Eigen::AlignedBox3d;

  Bvh() = default;
  explicit Bvh(const std::vector<Box>& boxes) { build(boxes); }

  void build(const std::vector<Box>& boxes) {
    boxes_ = boxes;
    order_.resize(boxes.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.clear();
    if (!boxes.empty()) build_node(0, static_cast<int>(boxes.size()));
  }

  bool empty() const { return nodes_.empty(); }

  /// Returns (primitive index, squared distance). `sq_dist(i)` must return the
  /// squared distance from the query to primitive i. Ties keep the lowest index.
  template <class F>
  std::pair<int, double> nearest(const Vec3& x, F&& sq_dist) const {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    if (nodes_.empty()) return {best, best_d};
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (node.box.squaredExteriorDistance(x) > best_d) continue;
      if (node.count > 0) {
        for (int k = node.first; k < node.first + node.count; ++k) {
          const int prim = order_[k];
          const double d = sq_dist(prim);
          if (d < best_d || (d == best_d && prim < best)) {
            best_d = d;
            best = prim;
          }
        }
        continue;
      }
      const double dl = nodes_[node.left].box.squaredExteriorDistance(x);
      const double dr = nodes_[node.right].box.squaredExteriorDistance(x);
      if (dl < dr) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
    return {best, best_d};
  }

 private:
  struct Node {
    Box box;
    int left = -1, right = -1;
    int first = 0, count = 0;
  };

  int build_node(int first, int last) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Box box;
    Box centroids;
    for (int k = first; k < last; ++k) {
      box.extend(boxes_[order_[k]]);
      centroids.extend(boxes_[order_[k]].center());
    }
    nodes_[id].box = box;
    const int count = last - first;
    if (count <= 4) {
      nodes_[id].first = first;
      nodes_[id].count = count;
      return id;
    }
    int axis = 0;
    centroids.sizes().maxCoeff(&axis);
    const int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + last,
                     [&](int a, int b) {
                       const double ca = boxes_[a].center()[axis];
                       const double cb = boxes_[b].center()[axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const int left = build_node(first, mid);
    const int right = build_node(mid, last);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::vector<Box> boxes_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace cpm
