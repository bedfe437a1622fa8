#pragma once

#include <Eigen/Dense>

namespace radartrack::ukf {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;

/// Constant-velocity UKF with polar (range, azimuth) measurements.
struct UkfConfig {
  double q = 0.5;               // white-acceleration spectral density, m^2/s^3
  Mat2 R = Mat2::Identity();    // measurement noise on (range [m], azimuth [rad])
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;

  static Mat2 diagonal_r(double sigma_range, double sigma_azimuth);
  void validate() const;
};

struct UkfState {
  Vec4 mean = Vec4::Zero();  // [x, y, vx, vy]
  Mat4 P = Mat4::Identity();
};

/// Polar measurement. Azimuth is measured from +y toward +x.
struct Measurement {
  double range = 0.0;
  double azimuth = 0.0;
};

/// h(x) = (sqrt(x^2 + y^2), atan2(x, y)).
Vec2 measure(const Vec4& x);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Q for the constant-velocity model driven by white acceleration.
Mat4 process_noise(double q, double dt);
Mat4 transition(double dt);

/// Propagates 2n + 1 sigma points through the CV transition and adds Q.
/// Throws InvalidSpec for dt <= 0 and NumericError when P cannot be made
/// positive definite.
UkfState ukf_predict(const UkfState& state, double dt, const UkfConfig& config);

struct UpdateResult {
  UkfState state;
  Vec2 innovation = Vec2::Zero();  // azimuth component wrapped
  Mat2 S = Mat2::Identity();
};

/// Full update that also reports the innovation and its covariance, so a
/// caller can gate before accepting the new state.
UpdateResult ukf_innovation(const UkfState& state, const Measurement& z, const UkfConfig& config);
UkfState ukf_update(const UkfState& state, const Measurement& z, const UkfConfig& config);

/// Symmetrizes P and, when a Cholesky factorization fails, adds 1e-9 to the
/// diagonal once. Throws NumericError if P is still not positive definite.
Mat4 repair_covariance(const Mat4& P);

}  // namespace radartrack::ukf
