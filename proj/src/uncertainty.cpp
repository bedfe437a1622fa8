#include "radartrack/uncertainty.hpp"

#include <cmath>

#include "radartrack/common.hpp"

namespace radartrack::uncertainty {

namespace {

// Solves L u = e.
Vec4 forward_substitute(const Mat4& L, const Vec4& e) {
  Vec4 u;
  for (int i = 0; i < 4; ++i) {
    double s = e(i);
    for (int j = 0; j < i; ++j) s -= L(i, j) * u(j);
    u(i) = s / L(i, i);
  }
  return u;
}

// Solves L^T w = u.
Vec4 back_substitute(const Mat4& L, const Vec4& u) {
  Vec4 w;
  for (int i = 3; i >= 0; --i) {
    double s = u(i);
    for (int j = i + 1; j < 4; ++j) s -= L(j, i) * w(j);
    w(i) = s / L(i, i);
  }
  return w;
}

}  // namespace

AleatoricCovariance build_covariance(const Vec4& alpha, const Vec6& beta) {
  for (int i = 0; i < 4; ++i) {
    if (!(alpha(i) > 0.0) || !std::isfinite(alpha(i))) {
      throw InvalidSpec("build_covariance: alpha must be positive and finite");
    }
  }
  AleatoricCovariance out;
  Mat4& L = out.factor.L;
  L.setZero();
  for (int i = 0; i < 4; ++i) L(i, i) = std::max(alpha(i), kAlphaFloor);
  for (std::size_t k = 0; k < kBetaPlacement.size(); ++k) {
    const auto [row, col] = kBetaPlacement[k];
    L(row, col) = beta(static_cast<Eigen::Index>(k));
  }
  out.sigma = L * L.transpose();
  return out;
}

double gaussian_nll(const Vec4& x, const Vec4& x_hat, const CholFactor& factor) {
  const Vec4 e = x - x_hat;
  if (!e.allFinite() || !factor.L.allFinite()) throw NumericError("gaussian_nll: non-finite input");
  const Vec4 u = forward_substitute(factor.L, e);
  double log_det = 0.0;
  for (int i = 0; i < 4; ++i) log_det += std::log(factor.L(i, i));
  return u.squaredNorm() + 2.0 * log_det;
}

NllGradient gaussian_nll_with_grad(const Vec4& x, const Vec4& x_hat, const Vec4& alpha,
                                   const Vec6& beta) {
  const AleatoricCovariance cov = build_covariance(alpha, beta);
  const Mat4& L = cov.factor.L;
  const Vec4 e = x - x_hat;
  if (!e.allFinite() || !beta.allFinite()) throw NumericError("gaussian_nll: non-finite input");

  // q = |u|^2 with L u = e; dq/de = 2 L^{-T} u = 2 w, dq/dL = -2 w u^T.
  const Vec4 u = forward_substitute(L, e);
  const Vec4 w = back_substitute(L, u);

  NllGradient g;
  g.value = u.squaredNorm();
  for (int i = 0; i < 4; ++i) g.value += 2.0 * std::log(L(i, i));
  g.d_x_hat = -2.0 * w;
  for (int i = 0; i < 4; ++i) {
    g.d_alpha(i) = alpha(i) >= kAlphaFloor ? -2.0 * w(i) * u(i) + 2.0 / L(i, i) : 0.0;
  }
  for (std::size_t k = 0; k < kBetaPlacement.size(); ++k) {
    const auto [row, col] = kBetaPlacement[k];
    g.d_beta(static_cast<Eigen::Index>(k)) = -2.0 * w(row) * u(col);
  }
  return g;
}

FusedEstimate fuse_mc_samples(std::span<const McSample> samples) {
  if (samples.empty()) throw InvalidSpec("fuse_mc_samples: need at least one sample");
  const double M = static_cast<double>(samples.size());
  FusedEstimate out;
  for (const auto& s : samples) {
    out.mean += s.x_hat;
    out.covariance.aleatoric += s.aleatoric;
  }
  out.mean /= M;
  out.covariance.aleatoric /= M;
  for (const auto& s : samples) {
    const Vec4 d = s.x_hat - out.mean;
    out.covariance.epistemic += d * d.transpose();
  }
  out.covariance.epistemic /= M;
  out.covariance.total = out.covariance.epistemic + out.covariance.aleatoric;
  return out;
}

Mat4 epistemic_uncentered(std::span<const McSample> samples) {
  if (samples.empty()) throw InvalidSpec("epistemic_uncentered: need at least one sample");
  const double M = static_cast<double>(samples.size());
  Vec4 mean = Vec4::Zero();
  Mat4 second = Mat4::Zero();
  for (const auto& s : samples) {
    mean += s.x_hat;
    second += s.x_hat * s.x_hat.transpose();
  }
  mean /= M;
  return second / M - mean * mean.transpose();
}

}  // namespace radartrack::uncertainty
