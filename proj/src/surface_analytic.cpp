#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cpm/errors.hpp"
#include "cpm/mesh.hpp"
#include "cpm/surface.hpp"

namespace cpm {

namespace {

constexpr double kTieTol = 1e-12;

bool ties(double d1, double d2) { return std::abs(d1 - d2) <= kTieTol * std::max(1.0, d1); }

[[noreturn]] void ambiguous(double dist, const std::string& shape, const Vec3& x) {
  throw AmbiguousClosestPoint(dist, shape + ": query (" + std::to_string(x.x()) + ", " +
                                        std::to_string(x.y()) + ", " + std::to_string(x.z()) +
                                        ") is on the medial axis");
}

Vec3 flatten(Vec3 x, int dim) {
  if (dim == 2) x.z() = 0.0;
  return x;
}

class PointShape final : public Surface {
 public:
  PointShape(const Vec3& p, int dim) : p_(flatten(p, dim)), dim_(dim) {}
  int dim() const override { return dim_; }
  int manifold_dim() const override { return 0; }
  CpResult closest_point(const Vec3& x) const override { return {p_, (x - p_).norm(), true}; }
  Vec3 sample_point() const override { return p_; }
  std::string name() const override { return "point"; }

 private:
  Vec3 p_;
  int dim_;
};

class ArcShape final : public Surface {
 public:
  ArcShape(const Vec3& center, const Vec3& e1, const Vec3& e2, double radius, double t0, double t1,
           int dim, bool full)
      : c_(center), e1_(e1.normalized()), r_(radius), t0_(t0), t1_(t1), dim_(dim), full_(full) {
    e2_ = (e2 - e2.dot(e1_) * e1_).normalized();
    n_ = e1_.cross(e2_);
  }

  int dim() const override { return dim_; }
  int manifold_dim() const override { return 1; }

  CpResult closest_point(const Vec3& x) const override {
    const Vec3 rel = x - c_;
    const Vec3 w = rel - rel.dot(n_) * n_;
    const double wn = w.norm();
    if (full_) {
      if (wn <= kTieTol * std::max(1.0, r_)) ambiguous(std::hypot(r_, rel.dot(n_)), "circle", x);
      const Vec3 cp = c_ + (r_ / wn) * w;
      return {cp, (x - cp).norm(), true};
    }
    if (wn > kTieTol * std::max(1.0, r_)) {
      double t = std::atan2(w.dot(e2_), w.dot(e1_));
      t = wrap(t);
      if (t <= t1_) {
        const Vec3 cp = c_ + (r_ / wn) * w;
        return {cp, (x - cp).norm(), true};
      }
    }
    return endpoint_query(x);
  }

  bool has_boundary() const override { return !full_; }
  CpResult boundary_closest_point(const Vec3& x) const override {
    if (full_) Surface::boundary_closest_point(x);
    return endpoint_query(x);
  }

  Vec3 sample_point() const override { return at(t0_); }

  std::vector<Vec3> sample(double spacing) const override {
    const double len = r_ * (t1_ - t0_);
    const int n = std::max(2, static_cast<int>(std::ceil(len / spacing)) + 1);
    std::vector<Vec3> out;
    const int count = full_ ? n - 1 : n;
    out.reserve(count);
    for (int k = 0; k < count; ++k) out.push_back(at(t0_ + (t1_ - t0_) * k / (n - 1)));
    return out;
  }

  std::string name() const override { return full_ ? "circle" : "arc"; }

 private:
  Vec3 at(double t) const { return c_ + r_ * (std::cos(t) * e1_ + std::sin(t) * e2_); }

  // Maps an angle into [t0, t0 + 2pi).
  double wrap(double t) const {
    const double two_pi = 2.0 * std::numbers::pi;
    double s = std::fmod(t - t0_, two_pi);
    if (s < 0) s += two_pi;
    return t0_ + s;
  }

  CpResult endpoint_query(const Vec3& x) const {
    const Vec3 a = at(t0_), b = at(t1_);
    const double da = (x - a).norm(), db = (x - b).norm();
    if (db < da && !ties(da, db)) return {b, db, true};
    return {a, da, true};
  }

  Vec3 c_, e1_, e2_, n_;
  double r_, t0_, t1_;
  int dim_;
  bool full_;
};

class SphereShape final : public Surface {
 public:
  SphereShape(const Vec3& c, double r) : c_(c), r_(r) {}
  int dim() const override { return 3; }
  int manifold_dim() const override { return 2; }
  CpResult closest_point(const Vec3& x) const override {
    const Vec3 w = x - c_;
    const double wn = w.norm();
    if (wn <= kTieTol * std::max(1.0, r_)) ambiguous(r_, "sphere", x);
    const Vec3 cp = c_ + (r_ / wn) * w;
    return {cp, (x - cp).norm(), true};
  }
  Vec3 sample_point() const override { return c_ + Vec3(r_, 0, 0); }
  std::string name() const override { return "sphere"; }

 private:
  Vec3 c_;
  double r_;
};

class TorusShape final : public Surface {
 public:
  TorusShape(const Vec3& c, double R, double r) : c_(c), R_(R), r_(r) {}
  int dim() const override { return 3; }
  int manifold_dim() const override { return 2; }
  CpResult closest_point(const Vec3& x) const override {
    const Vec3 w = x - c_;
    const double rho = std::hypot(w.x(), w.y());
    if (rho <= kTieTol * std::max(1.0, R_)) ambiguous(std::hypot(R_, w.z()) - r_, "torus", x);
    const Vec3 ring = c_ + Vec3(R_ * w.x() / rho, R_ * w.y() / rho, 0.0);
    const Vec3 v = x - ring;
    const double vn = v.norm();
    if (vn <= kTieTol * std::max(1.0, r_)) ambiguous(r_, "torus", x);
    const Vec3 cp = ring + (r_ / vn) * v;
    return {cp, (x - cp).norm(), true};
  }
  Vec3 sample_point() const override { return c_ + Vec3(R_ + r_, 0, 0); }
  std::string name() const override { return "torus"; }

 private:
  Vec3 c_;
  double R_, r_;
};

class PlaneSquareShape final : public Surface {
 public:
  PlaneSquareShape(double lo, double hi, int dim) : lo_(lo), hi_(hi), dim_(dim) {}
  int dim() const override { return dim_; }
  int manifold_dim() const override { return 2; }
  CpResult closest_point(const Vec3& x) const override {
    const Vec3 cp(std::clamp(x.x(), lo_, hi_), std::clamp(x.y(), lo_, hi_), 0.0);
    return {cp, (x - cp).norm(), true};
  }
  bool has_boundary() const override { return true; }
  CpResult boundary_closest_point(const Vec3& x) const override {
    Vec3 cp(std::clamp(x.x(), lo_, hi_), std::clamp(x.y(), lo_, hi_), 0.0);
    const bool inside = cp.x() > lo_ && cp.x() < hi_ && cp.y() > lo_ && cp.y() < hi_;
    if (inside) {
      const double gaps[4] = {cp.x() - lo_, hi_ - cp.x(), cp.y() - lo_, hi_ - cp.y()};
      const int side = static_cast<int>(std::min_element(gaps, gaps + 4) - gaps);
      if (side == 0) cp.x() = lo_;
      if (side == 1) cp.x() = hi_;
      if (side == 2) cp.y() = lo_;
      if (side == 3) cp.y() = hi_;
    }
    return {cp, (x - cp).norm(), true};
  }
  Vec3 sample_point() const override { return Vec3(0.5 * (lo_ + hi_), 0.5 * (lo_ + hi_), 0.0); }
  std::string name() const override { return "plane-square"; }

 private:
  double lo_, hi_;
  int dim_;
};

class SegmentShape final : public Surface {
 public:
  SegmentShape(const Vec3& a, const Vec3& b, int dim) : a_(flatten(a, dim)), b_(flatten(b, dim)), dim_(dim) {}
  int dim() const override { return dim_; }
  int manifold_dim() const override { return 1; }
  CpResult closest_point(const Vec3& x) const override {
    const Vec3 cp = closest_point_on_segment(x, a_, b_);
    return {cp, (x - cp).norm(), true};
  }
  bool has_boundary() const override { return true; }
  CpResult boundary_closest_point(const Vec3& x) const override {
    const double da = (x - a_).norm(), db = (x - b_).norm();
    if (db < da && !ties(da, db)) return {b_, db, true};
    return {a_, da, true};
  }
  Vec3 sample_point() const override { return a_; }
  std::vector<Vec3> sample(double spacing) const override {
    const int n = std::max(2, static_cast<int>(std::ceil((b_ - a_).norm() / spacing)) + 1);
    std::vector<Vec3> out;
    for (int k = 0; k < n; ++k) out.push_back(a_ + (b_ - a_) * (static_cast<double>(k) / (n - 1)));
    return out;
  }
  std::string name() const override { return "segment"; }

 private:
  Vec3 a_, b_;
  int dim_;
};

class PolylineShape final : public Surface {
 public:
  PolylineShape(std::vector<Vec3> pts, bool closed, int dim) : closed_(closed), dim_(dim) {
    if (pts.size() < 2) fail(ErrorCode::ParseError, "polyline needs at least two points");
    for (auto& p : pts) pts_.push_back(flatten(p, dim));
    const int nseg = static_cast<int>(pts_.size()) - (closed_ ? 0 : 1);
    std::vector<Bvh::Box> boxes;
    for (int s = 0; s < nseg; ++s) {
      Bvh::Box box(seg_a(s));
      box.extend(seg_b(s));
      boxes.push_back(box);
    }
    bvh_.build(boxes);
  }
  int dim() const override { return dim_; }
  int manifold_dim() const override { return 1; }
  CpResult closest_point(const Vec3& x) const override {
    const auto [s, d2] = bvh_.nearest(x, [&](int k) {
      return (x - closest_point_on_segment(x, seg_a(k), seg_b(k))).squaredNorm();
    });
    const Vec3 cp = closest_point_on_segment(x, seg_a(s), seg_b(s));
    return {cp, (x - cp).norm(), true};
  }
  bool has_boundary() const override { return !closed_; }
  CpResult boundary_closest_point(const Vec3& x) const override {
    if (closed_) Surface::boundary_closest_point(x);
    const Vec3& a = pts_.front();
    const Vec3& b = pts_.back();
    const double da = (x - a).norm(), db = (x - b).norm();
    if (db < da && !ties(da, db)) return {b, db, true};
    return {a, da, true};
  }
  Vec3 sample_point() const override { return pts_.front(); }
  std::vector<Vec3> sample(double spacing) const override {
    std::vector<Vec3> out;
    const int nseg = static_cast<int>(pts_.size()) - (closed_ ? 0 : 1);
    for (int s = 0; s < nseg; ++s) {
      const Vec3 a = seg_a(s), b = seg_b(s);
      const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / spacing)));
      for (int k = 0; k < n; ++k) out.push_back(a + (b - a) * (static_cast<double>(k) / n));
    }
    if (!closed_) out.push_back(pts_.back());
    return out;
  }
  std::string name() const override { return "polyline"; }

 private:
  const Vec3& seg_a(int s) const { return pts_[s]; }
  const Vec3& seg_b(int s) const { return pts_[(s + 1) % pts_.size()]; }

  std::vector<Vec3> pts_;
  bool closed_;
  int dim_;
  Bvh bvh_;
};

class CompositeShape final : public Surface {
 public:
  explicit CompositeShape(std::vector<SurfacePtr> parts) : parts_(std::move(parts)) {
    if (parts_.empty()) fail(ErrorCode::InvalidConfig, "composite surface needs at least one part");
    dim_ = parts_.front()->dim();
    for (const auto& p : parts_) {
      if (p->dim() != dim_) fail(ErrorCode::InconsistentDimensions, "composite parts differ in dimension");
      mdim_ = std::max(mdim_, p->manifold_dim());
      boundary_ = boundary_ || p->has_boundary();
    }
  }
  int dim() const override { return dim_; }
  int manifold_dim() const override { return mdim_; }
  CpResult closest_point(const Vec3& x) const override {
    CpResult best;
    bool have = false;
    for (const auto& p : parts_) {
      const CpResult r = p->closest_point(x);
      if (!have || (r.dist < best.dist && !ties(best.dist, r.dist))) {
        best = r;
        have = true;
      }
    }
    return best;
  }
  bool has_boundary() const override { return boundary_; }
  CpResult boundary_closest_point(const Vec3& x) const override {
    CpResult best;
    bool have = false;
    for (const auto& p : parts_) {
      if (!p->has_boundary()) continue;
      const CpResult r = p->boundary_closest_point(x);
      if (!have || (r.dist < best.dist && !ties(best.dist, r.dist))) {
        best = r;
        have = true;
      }
    }
    if (!have) Surface::boundary_closest_point(x);
    return best;
  }
  Vec3 sample_point() const override { return parts_.front()->sample_point(); }
  std::vector<Vec3> sample(double spacing) const override {
    std::vector<Vec3> out;
    for (const auto& p : parts_) {
      const auto s = p->sample(spacing);
      out.insert(out.end(), s.begin(), s.end());
    }
    return out;
  }
  std::string name() const override { return "composite"; }
  const std::vector<SurfacePtr>& parts() const { return parts_; }

 private:
  std::vector<SurfacePtr> parts_;
  int dim_ = 3;
  int mdim_ = 0;
  bool boundary_ = false;
};

class SignedDistanceShape final : public Surface {
 public:
  explicit SignedDistanceShape(SignedDistanceDesc d) : d_(std::move(d)) {}
  int dim() const override { return d_.dim; }
  int manifold_dim() const override { return d_.manifold_dim; }
  CpResult closest_point(const Vec3& x) const override {
    const double s = d_.dist(x);
    const Vec3 cp = flatten(x - s * d_.grad(x), d_.dim);
    return {cp, (x - cp).norm(), true};
  }
  Vec3 sample_point() const override { return closest_point(d_.hint).cp; }
  std::string name() const override { return d_.label; }

 private:
  SignedDistanceDesc d_;
};

}  // namespace

CpResult Surface::boundary_closest_point(const Vec3&) const {
  fail(ErrorCode::InvalidConfig, name() + " has no boundary");
}

SurfacePtr make_point(const Vec3& p, int dim) { return std::make_shared<PointShape>(p, dim); }

SurfacePtr make_circle(const Vec3& center, double radius) {
  return std::make_shared<ArcShape>(flatten(center, 2), Vec3::UnitX(), Vec3::UnitY(), radius, 0.0,
                                    2.0 * std::numbers::pi, 2, true);
}

SurfacePtr make_circle3(const Vec3& center, const Vec3& normal, double radius) {
  const Vec3 n = normal.normalized();
  Vec3 e1 = n.cross(Vec3::UnitZ());
  if (e1.norm() < 1e-8) e1 = n.cross(Vec3::UnitX());
  e1.normalize();
  const Vec3 e2 = n.cross(e1);
  return std::make_shared<ArcShape>(center, e1, e2, radius, 0.0, 2.0 * std::numbers::pi, 3, true);
}

SurfacePtr make_arc(const Vec3& center, const Vec3& e1, const Vec3& e2, double radius, double t0,
                    double t1, int dim) {
  if (!(t1 > t0)) fail(ErrorCode::InvalidConfig, "arc needs t1 > t0");
  const bool full = t1 - t0 >= 2.0 * std::numbers::pi;
  return std::make_shared<ArcShape>(flatten(center, dim), e1, e2, radius, t0,
                                    full ? t0 + 2.0 * std::numbers::pi : t1, dim, full);
}

SurfacePtr make_sphere(const Vec3& center, double radius) {
  return std::make_shared<SphereShape>(center, radius);
}

SurfacePtr make_torus(const Vec3& center, double major_radius, double minor_radius) {
  return std::make_shared<TorusShape>(center, major_radius, minor_radius);
}

SurfacePtr make_plane_square(double lo, double hi, int dim) {
  return std::make_shared<PlaneSquareShape>(lo, hi, dim);
}

SurfacePtr make_segment(const Vec3& a, const Vec3& b, int dim) {
  return std::make_shared<SegmentShape>(a, b, dim);
}

SurfacePtr make_polyline(std::vector<Vec3> points, bool closed, int dim) {
  return std::make_shared<PolylineShape>(std::move(points), closed, dim);
}

SurfacePtr make_composite(std::vector<SurfacePtr> parts) {
  return std::make_shared<CompositeShape>(std::move(parts));
}

SurfacePtr make_signed_distance(SignedDistanceDesc desc) {
  return std::make_shared<SignedDistanceShape>(std::move(desc));
}

Vec3 reflected_query(const Surface& surface, const Vec3& x) {
  const Vec3 cp = surface.closest_point(x).cp;
  return surface.closest_point(2.0 * cp - x).cp;
}

Vec3 reflected_query_about_curve(const Surface& surface, const Surface& curve, const Vec3& x) {
  const Vec3 cpc = curve.closest_point(x).cp;
  return surface.closest_point(2.0 * cpc - x).cp;
}

}  // namespace cpm
