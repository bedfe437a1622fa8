#pragma once

// Independent reference implementations used by the tests and the acceptance
// binary. Each is deliberately naive.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

/// Cyclic Jacobi rotations on a symmetric matrix; returns the eigenvalues in
/// ascending order.
inline std::vector<double> jacobi_eigenvalues(Eigen::Matrix4d a) {
  const int n = 4;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev{a(0, 0), a(1, 1), a(2, 2), a(3, 3)};
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// Composite Simpson integration of the chi-square density with 4 degrees of
/// freedom, x e^{-x/2} / 4, from 0 to x.
inline double chi2_4_cdf_quadrature(double x, int intervals = 20000) {
  if (x <= 0.0) return 0.0;
  auto f = [](double t) { return t * std::exp(-0.5 * t) / 4.0; };
  const double h = x / intervals;
  double s = f(0.0) + f(x);
  for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

/// DBSCAN by explicit epsilon-graph: all pairwise distances, union-find over
/// core-core edges, border points to the lowest-numbered adjacent cluster.
inline std::vector<int> dbscan_bruteforce(std::span<const std::array<double, 3>> pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  std::vector<int> degree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (int k = 0; k < 3; ++k) d2 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      if (d2 <= eps * eps) {
        adj[i][j] = 1;
        ++degree[i];
      }
    }
  }
  std::vector<char> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = degree[i] >= min_pts;

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (core[i] && core[j] && adj[i][j]) parent[find(i)] = find(j);
    }
  }
  std::vector<int> labels(n, -1);
  std::map<std::size_t, int> id;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const auto root = find(i);
    if (!id.count(root)) {
      const int next = static_cast<int>(id.size());
      id[root] = next;
    }
    labels[i] = id[root];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && adj[i][j] && (best < 0 || labels[j] < best)) best = labels[j];
    }
    labels[i] = best;
  }
  return labels;
}

/// True when two labelings describe the same partition, with noise (-1)
/// fixed and cluster ids related by a bijection.
inline bool same_partition(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] < 0) != (b[i] < 0)) return false;
    if (a[i] < 0) continue;
    auto [it1, new1] = ab.emplace(a[i], b[i]);
    auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

/// Linear Kalman filter predict for the constant-velocity model.
inline void kf_predict(Eigen::Vector4d& x, Eigen::Matrix4d& P, const Eigen::Matrix4d& F, const Eigen::Matrix4d& Q) {
  x = F * x;
  P = F * P * F.transpose() + Q;
}

/// Explicit inverse and determinant form of the Gaussian NLL.
inline double nll_explicit(const Eigen::Vector4d& e, const Eigen::Matrix4d& sigma) {
  return e.dot(sigma.inverse() * e) + std::log(sigma.determinant());
}

}  // namespace oracles
