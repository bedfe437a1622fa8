#include "radartrack/dbscan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "radartrack/common.hpp"

namespace radartrack::dbscan {

namespace {

// Uniform grid with cell side eps, so every neighbor of a point lies in the
// 27 surrounding cells.
class Grid {
 public:
  Grid(std::span<const Point> points, double eps) : points_(points), eps_(eps) {
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key(cell_of(points[i]))].push_back(static_cast<int>(i));
  }

  void neighbors(int i, std::vector<int>& out) const {
    out.clear();
    const Point& p = points_[static_cast<std::size_t>(i)];
    const auto c = cell_of(p);
    const double eps2 = eps_ * eps_;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (int j : it->second) {
            const Point& q = points_[static_cast<std::size_t>(j)];
            const double d0 = p[0] - q[0], d1 = p[1] - q[1], d2 = p[2] - q[2];
            if (d0 * d0 + d1 * d1 + d2 * d2 <= eps2) out.push_back(j);
          }
        }
    std::sort(out.begin(), out.end());
  }

 private:
  std::array<std::int64_t, 3> cell_of(const Point& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / eps_)), static_cast<std::int64_t>(std::floor(p[1] / eps_)),
            static_cast<std::int64_t>(std::floor(p[2] / eps_))};
  }
  static std::uint64_t key(const std::array<std::int64_t, 3>& c) {
    std::uint64_t h = 0;
    for (auto v : c) h = derive_seed(h, static_cast<std::uint64_t>(v));
    return h;
  }

  std::span<const Point> points_;
  double eps_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace

std::vector<int> cluster(std::span<const Point> points, double eps, int min_pts) {
  if (!(eps > 0.0) || min_pts < 1) throw InvalidSpec("dbscan: eps and min_pts must be positive");
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  const Grid grid(points, eps);
  std::vector<std::vector<int>> nbrs(n);
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    grid.neighbors(static_cast<int>(i), nbrs[i]);
    core[i] = static_cast<int>(nbrs[i].size()) >= min_pts;
  }

  int next = 0;
  std::vector<int> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != kNoise) continue;
    const int id = next++;
    labels[i] = id;
    stack.assign(1, static_cast<int>(i));
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      for (int q : nbrs[static_cast<std::size_t>(p)]) {
        if (core[static_cast<std::size_t>(q)] && labels[static_cast<std::size_t>(q)] == kNoise) {
          labels[static_cast<std::size_t>(q)] = id;
          stack.push_back(q);
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = kNoise;
    for (int q : nbrs[i]) {
      if (!core[static_cast<std::size_t>(q)]) continue;
      const int l = labels[static_cast<std::size_t>(q)];
      if (best == kNoise || l < best) best = l;
    }
    labels[i] = best;
  }
  return labels;
}

int cluster_count(std::span<const int> labels) {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m + 1;
}

}  // namespace radartrack::dbscan
