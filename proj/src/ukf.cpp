#include "radartrack/ukf.hpp"

#include <array>
#include <cmath>

#include "radartrack/common.hpp"

namespace radartrack::ukf {

namespace {

constexpr int kN = 4;

struct Weights {
  double lambda = 0.0;
  std::array<double, 2 * kN + 1> wm{};
  std::array<double, 2 * kN + 1> wc{};
};

Weights weights(const UkfConfig& c) {
  Weights w;
  w.lambda = c.alpha * c.alpha * (kN + c.kappa) - kN;
  const double denom = kN + w.lambda;
  w.wm[0] = w.lambda / denom;
  w.wc[0] = w.wm[0] + (1.0 - c.alpha * c.alpha + c.beta);
  for (int i = 1; i <= 2 * kN; ++i) w.wm[static_cast<std::size_t>(i)] = w.wc[static_cast<std::size_t>(i)] = 0.5 / denom;
  return w;
}

std::array<Vec4, 2 * kN + 1> sigma_points(const UkfState& s, const Weights& w) {
  const Eigen::LLT<Mat4> llt((kN + w.lambda) * s.P);
  if (llt.info() != Eigen::Success) throw NumericError("ukf: covariance is not positive definite");
  const Mat4 S = llt.matrixL();
  std::array<Vec4, 2 * kN + 1> X;
  X[0] = s.mean;
  for (int i = 0; i < kN; ++i) {
    X[static_cast<std::size_t>(1 + i)] = s.mean + S.col(i);
    X[static_cast<std::size_t>(1 + kN + i)] = s.mean - S.col(i);
  }
  return X;
}

}  // namespace

Mat2 UkfConfig::diagonal_r(double sigma_range, double sigma_azimuth) {
  Mat2 r = Mat2::Zero();
  r(0, 0) = sigma_range * sigma_range;
  r(1, 1) = sigma_azimuth * sigma_azimuth;
  return r;
}

void UkfConfig::validate() const {
  if (!(q >= 0.0) || !std::isfinite(q)) throw InvalidSpec("ukf: q must be finite and >= 0");
  if (!(alpha > 0.0) || kN + kappa <= 0.0) throw InvalidSpec("ukf: invalid sigma-point parameters");
  const Eigen::LLT<Mat2> llt(R);
  if (llt.info() != Eigen::Success || !R.allFinite() || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidSpec("ukf: R must be symmetric positive definite");
  }
}

Vec2 measure(const Vec4& x) { return {std::hypot(x(0), x(1)), std::atan2(x(0), x(1))}; }

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Mat4 transition(double dt) {
  Mat4 F = Mat4::Identity();
  F(0, 2) = dt;
  F(1, 3) = dt;
  return F;
}

Mat4 process_noise(double q, double dt) {
  Mat4 Q = Mat4::Zero();
  const double a = q * dt * dt * dt / 3.0, b = q * dt * dt / 2.0, c = q * dt;
  Q(0, 0) = Q(1, 1) = a;
  Q(0, 2) = Q(2, 0) = Q(1, 3) = Q(3, 1) = b;
  Q(2, 2) = Q(3, 3) = c;
  return Q;
}

Mat4 repair_covariance(const Mat4& P) {
  Mat4 sym = 0.5 * (P + P.transpose());
  if (Eigen::LLT<Mat4>(sym).info() == Eigen::Success && sym.allFinite()) return sym;
  sym += 1e-9 * Mat4::Identity();
  if (Eigen::LLT<Mat4>(sym).info() != Eigen::Success || !sym.allFinite()) {
    throw NumericError("ukf: covariance lost positive definiteness");
  }
  return sym;
}

UkfState ukf_predict(const UkfState& state, double dt, const UkfConfig& config) {
  if (!(dt > 0.0)) throw InvalidSpec("ukf_predict: dt must be positive");
  const Weights w = weights(config);
  const auto X = sigma_points(state, w);
  const Mat4 F = transition(dt);
  std::array<Vec4, 2 * kN + 1> Y;
  UkfState out;
  out.mean.setZero();
  for (std::size_t i = 0; i < Y.size(); ++i) {
    Y[i] = F * X[i];
    out.mean += w.wm[i] * Y[i];
  }
  out.P.setZero();
  for (std::size_t i = 0; i < Y.size(); ++i) {
    const Vec4 d = Y[i] - out.mean;
    out.P += w.wc[i] * d * d.transpose();
  }
  out.P += process_noise(config.q, dt);
  out.P = repair_covariance(out.P);
  return out;
}

UpdateResult ukf_innovation(const UkfState& state, const Measurement& z, const UkfConfig& config) {
  const Weights w = weights(config);
  const auto X = sigma_points(state, w);
  std::array<Vec2, 2 * kN + 1> Z;
  for (std::size_t i = 0; i < X.size(); ++i) Z[i] = measure(X[i]);

  // Average azimuths relative to the central point so the wrap is harmless.
  Vec2 z_mean = Vec2::Zero();
  for (std::size_t i = 0; i < Z.size(); ++i) {
    Vec2 d = Z[i] - Z[0];
    d(1) = wrap_angle(d(1));
    z_mean += w.wm[i] * d;
  }
  z_mean += Z[0];
  z_mean(1) = wrap_angle(z_mean(1));

  Mat2 S = config.R;
  Mat42 C = Mat42::Zero();
  for (std::size_t i = 0; i < Z.size(); ++i) {
    Vec2 dz = Z[i] - z_mean;
    dz(1) = wrap_angle(dz(1));
    const Vec4 dx = X[i] - state.mean;
    S += w.wc[i] * dz * dz.transpose();
    C += w.wc[i] * dx * dz.transpose();
  }
  S = 0.5 * (S + S.transpose());

  UpdateResult r;
  r.S = S;
  r.innovation = Vec2(z.range, z.azimuth) - z_mean;
  r.innovation(1) = wrap_angle(r.innovation(1));
  const Eigen::Matrix<double, 4, 2> K = C * S.inverse();
  r.state.mean = state.mean + K * r.innovation;
  r.state.P = repair_covariance(state.P - K * S * K.transpose());
  return r;
}

UkfState ukf_update(const UkfState& state, const Measurement& z, const UkfConfig& config) {
  return ukf_innovation(state, z, config).state;
}

}  // namespace radartrack::ukf
