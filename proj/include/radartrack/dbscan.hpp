#pragma once

#include <array>
#include <span>
#include <vector>

namespace radartrack::dbscan {

using Point = std::array<double, 3>;

inline constexpr int kNoise = -1;

/// Density-based clustering with Euclidean epsilon-neighborhoods. A point is
/// a core point when at least `min_pts` points (itself included) lie within
/// `eps`. Clusters are the connected components of the core points and are
/// numbered in order of their lowest-index core point. A border point joins
/// the lowest-numbered cluster among its core neighbors; everything else is
/// kNoise. The result does not depend on traversal order.
std::vector<int> cluster(std::span<const Point> points, double eps, int min_pts);

/// Number of clusters in a label vector.
int cluster_count(std::span<const int> labels);

}  // namespace radartrack::dbscan
