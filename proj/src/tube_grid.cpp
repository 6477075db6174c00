#include "cpm/tube_grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cpm/errors.hpp"

namespace cpm {

namespace {

constexpr double kSubsetTol = 1e-10;

LatticeIndex offset(LatticeIndex k, int axis, int dir) {
  k[axis] += dir;
  return k;
}

// Rebuilds dof_of, neighbour table and edge flags from `index`.
void finalize(SparseGrid& g) {
  const int n = g.size();
  g.dof_of.clear();
  g.dof_of.reserve(static_cast<std::size_t>(n) * 2);
  for (int i = 0; i < n; ++i) g.dof_of.emplace(lattice_key(g.index[i]), i);
  g.neighbors.assign(static_cast<std::size_t>(2 * g.dim) * n, -1);
  g.edge_of_tube.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < g.dim; ++a) {
      for (int s = 0; s < 2; ++s) {
        const int j = g.find(offset(g.index[i], a, s == 0 ? -1 : 1));
        g.neighbors[2 * g.dim * i + 2 * a + s] = j;
        if (j < 0) g.edge_of_tube[i] = 1;
      }
    }
  }
}

}  // namespace

double tube_radius(double dx, int d, int p, int q) {
  const double h = 0.5 * (p + 1);
  return dx * std::sqrt((d - 1) * h * h + (q + h) * (q + h));
}

LatticeIndex SparseGrid::nearest_index(const Vec3& x) const {
  LatticeIndex k{0, 0, 0};
  for (int a = 0; a < dim; ++a) k[a] = static_cast<int>(std::lround((x[a] - origin[a]) / dx));
  return k;
}

SparseGrid build_tube(const Surface& surface, double dx, int p, int q, const std::vector<Vec3>& seeds_in) {
  if (!(dx > 0.0)) fail(ErrorCode::InvalidConfig, "dx must be positive");
  if (p < 1 || q < 1) fail(ErrorCode::InvalidConfig, "p and q must be at least 1");
  SparseGrid g;
  g.dim = surface.dim();
  g.dx = dx;
  g.p = p;
  g.q = q;
  g.radius = tube_radius(dx, g.dim, p, q);
  const double r = g.radius;

  std::vector<Vec3> seeds = seeds_in;
  if (seeds.empty()) seeds.push_back(surface.sample_point());

  std::unordered_map<std::uint64_t, int> visited;
  std::vector<LatticeIndex> kept_index;
  std::vector<CpResult> kept_cp;
  std::deque<LatticeIndex> queue;

  // Returns the kept slot for k, querying its closest point on first visit.
  const auto visit = [&](const LatticeIndex& k) -> int {
    const std::uint64_t key = lattice_key(k);
    const auto it = visited.find(key);
    if (it != visited.end()) return it->second;
    ++g.cp_queries;
    int slot = -1;
    try {
      const CpResult c = surface.closest_point(g.position(k));
      if (c.dist <= r) {
        slot = static_cast<int>(kept_index.size());
        kept_index.push_back(k);
        kept_cp.push_back(c);
        queue.push_back(k);
      }
    } catch (const AmbiguousClosestPoint& e) {
      if (e.dist() <= r) throw;
    }
    visited.emplace(key, slot);
    return slot;
  };

  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const std::size_t before = kept_index.size();
    // Try the lattice corners around the seed; at least one lies within r of
    // any point on S.
    LatticeIndex base{0, 0, 0};
    for (int a = 0; a < g.dim; ++a) base[a] = static_cast<int>(std::floor((seeds[s][a] - g.origin[a]) / dx));
    bool started = false;
    bool already = false;
    for (int c = 0; c < (1 << g.dim) && !started; ++c) {
      LatticeIndex k = base;
      for (int a = 0; a < g.dim; ++a) k[a] += (c >> a) & 1;
      const auto it = visited.find(lattice_key(k));
      if (it != visited.end() && it->second >= 0) {
        already = true;
        started = true;
        break;
      }
      if (visit(k) >= 0) started = true;
    }
    if (!started) fail(ErrorCode::SeedOutsideTube, "seed " + std::to_string(s) + " is farther than r from S");
    if (already) continue;
    while (!queue.empty()) {
      const LatticeIndex k = queue.front();
      queue.pop_front();
      for (int a = 0; a < g.dim; ++a) {
        visit(offset(k, a, -1));
        visit(offset(k, a, 1));
      }
    }
    if (s > 0 && kept_index.size() > before) {
      g.warnings.push_back("DisconnectedComponentWarning: seed " + std::to_string(s) + " discovered " +
                           std::to_string(kept_index.size() - before) + " new cells");
    }
  }
  g.visited_cells = visited.size();

  std::vector<int> order(kept_index.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return kept_index[a] < kept_index[b]; });
  const int n = static_cast<int>(order.size());
  g.index.resize(n);
  g.cp.resize(n);
  g.dist.resize(n);
  for (int i = 0; i < n; ++i) {
    g.index[i] = kept_index[order[i]];
    g.cp[i] = kept_cp[order[i]].cp;
    g.dist[i] = kept_cp[order[i]].dist;
  }
  finalize(g);
  g.has_boundary_cp.assign(n, 0);
  g.cp_boundary.assign(n, Vec3::Zero());
  g.in_boundary_subset.assign(n, 0);
  if (surface.has_boundary()) mark_boundary_subsets(g, surface);
  return g;
}

void mark_boundary_subsets(SparseGrid& g, const Surface& surface) {
  const int n = g.size();
  g.has_boundary_cp.assign(n, 0);
  g.cp_boundary.assign(n, Vec3::Zero());
  g.in_boundary_subset.assign(n, 0);
  if (!surface.has_boundary()) return;
  for (int i = 0; i < n; ++i) {
    const CpResult b = surface.boundary_closest_point(g.position(i));
    g.has_boundary_cp[i] = 1;
    g.cp_boundary[i] = b.cp;
    g.in_boundary_subset[i] = (g.cp[i] - b.cp).norm() <= kSubsetTol ? 1 : 0;
  }
}

IbcBand build_ibc_band(const SparseGrid& g, const Surface& surface, const Surface& curve) {
  if (curve.dim() != g.dim) fail(ErrorCode::DimensionMismatch, "curve and grid dimensions differ");
  const std::vector<Vec3> samples = curve.sample(0.5 * g.dx);
  for (const Vec3& y : samples) {
    const double d = surface.closest_point(y).dist;
    if (d > 1e-6) {
      std::ostringstream msg;
      msg << "curve point (" << y.transpose() << ") is " << d << " away from the surface";
      fail(ErrorCode::CurveOffSurface, msg.str());
    }
  }

  IbcBand band;
  band.n_pde = g.size();
  band.radius = g.radius;
  const int n = g.size();
  band.band_of.assign(n, -1);
  band.cached.assign(n, 0);
  band.cp_c.assign(n, Vec3::Zero());
  band.dist_c.assign(n, 0.0);
  band.at_endpoint.assign(n, 0);
  const double audit = 2.0 * g.radius;

  std::vector<std::uint8_t> seen(n, 0);
  std::deque<int> queue;
  const auto visit = [&](int i) {
    if (i < 0 || seen[i]) return;
    seen[i] = 1;
    ++band.cp_queries;
    CpResult c;
    try {
      c = curve.closest_point(g.position(i));
    } catch (const AmbiguousClosestPoint& e) {
      if (e.dist() < audit) throw;
      return;
    }
    if (c.dist >= audit) return;
    band.cached[i] = 1;
    band.cp_c[i] = c.cp;
    band.dist_c[i] = c.dist;
    queue.push_back(i);
  };
  for (const Vec3& y : samples) visit(g.find(g.nearest_index(y)));
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    for (int a = 0; a < g.dim; ++a) {
      visit(g.neighbor(i, a, -1));
      visit(g.neighbor(i, a, 1));
    }
  }

  const bool open = curve.has_boundary();
  for (int i = 0; i < n; ++i) {
    if (!band.cached[i]) continue;
    band.cached_dofs.push_back(i);
    if (open) {
      const Vec3 e = curve.boundary_closest_point(g.position(i)).cp;
      band.at_endpoint[i] = (band.cp_c[i] - e).norm() <= kSubsetTol ? 1 : 0;
    }
    if (band.dist_c[i] <= g.radius) {
      band.band_of[i] = static_cast<int>(band.base.size());
      band.base.push_back(i);
    }
  }
  return band;
}

void write_grid_table(const SparseGrid& g, std::ostream& out) {
  out << "# dim dx p q\n" << g.dim << ' ' << std::setprecision(17) << g.dx << ' ' << g.p << ' ' << g.q << '\n';
  out << "# i j k cpx cpy cpz dist boundary_subset edge\n";
  for (int i = 0; i < g.size(); ++i) {
    out << g.index[i][0] << ' ' << g.index[i][1] << ' ' << g.index[i][2] << ' ' << g.cp[i].x() << ' '
        << g.cp[i].y() << ' ' << g.cp[i].z() << ' ' << g.dist[i] << ' ' << int(g.in_boundary_subset[i]) << ' '
        << int(g.edge_of_tube[i]) << '\n';
  }
}

SparseGrid read_grid_table(std::istream& in) {
  SparseGrid g;
  std::string line;
  int line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    if (!header) {
      if (!(ls >> g.dim >> g.dx >> g.p >> g.q)) fail(ErrorCode::ParseError, "grid table line " + std::to_string(line_no));
      g.radius = tube_radius(g.dx, g.dim, g.p, g.q);
      header = true;
      continue;
    }
    LatticeIndex k;
    Vec3 cp;
    double d;
    int flag, edge;
    if (!(ls >> k[0] >> k[1] >> k[2] >> cp.x() >> cp.y() >> cp.z() >> d >> flag >> edge)) {
      fail(ErrorCode::ParseError, "grid table line " + std::to_string(line_no));
    }
    g.index.push_back(k);
    g.cp.push_back(cp);
    g.dist.push_back(d);
    g.in_boundary_subset.push_back(static_cast<std::uint8_t>(flag));
  }
  if (!header) fail(ErrorCode::ParseError, "grid table has no header");
  const int n = g.size();
  g.has_boundary_cp.assign(n, 0);
  g.cp_boundary.assign(n, Vec3::Zero());
  finalize(g);
  return g;
}

void write_dof_counts_csv(const std::vector<std::array<double, 3>>& rows, std::ostream& out) {
  out << "dx,n_pde,n_band\n";
  for (const auto& r : rows) {
    out << std::setprecision(17) << r[0] << ',' << static_cast<long long>(r[1]) << ','
        << static_cast<long long>(r[2]) << '\n';
  }
}

}  // namespace cpm
