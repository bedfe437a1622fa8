#pragma once

#include <array>
#include <span>
#include <utility>

#include <Eigen/Dense>

namespace radartrack::uncertainty {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Lower bound applied to the Cholesky diagonal. The exp head cannot produce
/// zero, but it can underflow early in training.
inline constexpr double kAlphaFloor = 1e-4;

/// Where beta_k lands in L: row-major over the strict lower triangle.
inline constexpr std::array<std::pair<int, int>, 6> kBetaPlacement{
    {{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}}};

/// Lower-triangular Cholesky factor with positive diagonal.
struct CholFactor {
  Mat4 L = Mat4::Identity();
};

struct AleatoricCovariance {
  CholFactor factor;
  Mat4 sigma = Mat4::Identity();  // L L^T
};

/// L has diag(L) = max(alpha, kAlphaFloor) and the strict lower triangle
/// filled from beta; returns L and L L^T. Throws InvalidSpec for
/// nonpositive or non-finite alpha.
AleatoricCovariance build_covariance(const Vec4& alpha, const Vec6& beta);

/// (x - x_hat)^T (L L^T)^{-1} (x - x_hat) + ln|L L^T|, evaluated by forward
/// substitution with ln|L L^T| = 2 sum ln L_ii. Throws NumericError on
/// non-finite input.
double gaussian_nll(const Vec4& x, const Vec4& x_hat, const CholFactor& factor);

struct NllGradient {
  double value = 0.0;
  Vec4 d_x_hat = Vec4::Zero();
  Vec4 d_alpha = Vec4::Zero();
  Vec6 d_beta = Vec6::Zero();
};

/// Loss and its analytic gradient with respect to the head outputs.
/// Entries of alpha clipped by the floor receive zero gradient.
NllGradient gaussian_nll_with_grad(const Vec4& x, const Vec4& x_hat, const Vec4& alpha,
                                   const Vec6& beta);

struct McSample {
  Vec4 x_hat = Vec4::Zero();
  Mat4 aleatoric = Mat4::Identity();
};

struct CovarianceEstimate {
  Mat4 aleatoric = Mat4::Zero();  // mean of the per-sample aleatoric matrices
  Mat4 epistemic = Mat4::Zero();  // biased (1/M) sample covariance of the means
  Mat4 total = Mat4::Zero();      // epistemic + aleatoric
};

struct FusedEstimate {
  Vec4 mean = Vec4::Zero();
  CovarianceEstimate covariance;
};

/// Combines M Monte-Carlo dropout passes into the averaged estimate and the
/// aleatoric + epistemic covariance. The epistemic term uses the centered
/// sum. Throws InvalidSpec when `samples` is empty.
FusedEstimate fuse_mc_samples(std::span<const McSample> samples);

/// Epistemic covariance in the uncentered form sum(x x^T)/M - mean mean^T.
Mat4 epistemic_uncentered(std::span<const McSample> samples);

}  // namespace radartrack::uncertainty
