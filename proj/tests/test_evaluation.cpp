#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <doctest.h>

#include "oracles.hpp"
#include "radartrack/evaluation.hpp"
#include "radartrack/uncertainty.hpp"

using namespace radartrack;
using namespace radartrack::evaluation;
namespace fs = std::filesystem;

namespace {

TrackLog offset_log(const std::vector<double>& dx, double dv = 0.0) {
  TrackLog log;
  log.method = "test";
  for (std::size_t i = 0; i < dx.size(); ++i) {
    TrackRow r;
    r.frame = static_cast<int>(i);
    r.timestamp = i / 15.0;
    r.truth = {0.0, 2.0, 0.1, 0.0};
    r.estimate = {dx[i], 2.0, 0.1 + dv, 0.0};
    log.rows.push_back(r);
  }
  return log;
}

// Standard-normal residuals mapped through a random covariance, so xi is
// exactly chi-square(4) distributed.
TrackLog calibrated_log(std::size_t n, double cov_scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  TrackLog log;
  log.method = "calibrated";
  for (std::size_t i = 0; i < n; ++i) {
    Mat4 A;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) A(a, b) = 0.2 * g(rng);
    const Mat4 S = A * A.transpose() + 0.01 * Mat4::Identity();
    const Mat4 L = S.llt().matrixL();
    const Vec4 e = L * Vec4(g(rng), g(rng), g(rng), g(rng));
    TrackRow r;
    r.episode = static_cast<int>(i / 150);
    r.frame = static_cast<int>(i % 150);
    r.timestamp = r.frame / 15.0;
    r.truth = {1.0, 2.0, 0.0, 0.0};
    for (int k = 0; k < 4; ++k) r.estimate[static_cast<std::size_t>(k)] = r.truth[static_cast<std::size_t>(k)] + e(k);
    r.covariance = cov_scale * S;
    log.rows.push_back(r);
  }
  return log;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rmse") {
  CHECK(rmse(offset_log({0, 0, 0}), Component::position) == 0.0);
  CHECK(rmse(offset_log({0.1, 0.1, 0.1}), Component::position) == doctest::Approx(10.0));
  CHECK(rmse(offset_log({0, 0}, 0.25), Component::velocity) == doctest::Approx(25.0));
  CHECK(rmse(offset_log({0, 0}, 0.25), Component::position) == 0.0);

  // Two-pass oracle on a random log.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.2);
  TrackLog log;
  for (int i = 0; i < 500; ++i) {
    TrackRow r;
    r.frame = i;
    r.timestamp = i / 15.0;
    r.truth = {g(rng), 2 + g(rng), g(rng), g(rng)};
    r.estimate = {g(rng), 2 + g(rng), g(rng), g(rng)};
    log.rows.push_back(r);
  }
  std::vector<double> sq;
  for (const auto& r : log.rows) {
    sq.push_back(std::pow(r.estimate[0] - r.truth[0], 2) + std::pow(r.estimate[1] - r.truth[1], 2));
  }
  double s = 0.0;
  for (double v : sq) s += v;
  CHECK(rmse(log, Component::position) == doctest::Approx(100.0 * std::sqrt(s / sq.size())).epsilon(1e-12));
  CHECK_THROWS_AS(rmse(TrackLog{}, Component::position), InvalidSpec);
}

TEST_CASE("leo") {
  CHECK(leo(offset_log({0.1, 0.3, 0.15, 0.25})) == doctest::Approx(0.5));
  CHECK(leo(offset_log({0, 0, 0})) == 0.0);
  // Exactly on the radius counts as inside.
  auto log = offset_log({0.0});
  log.rows[0].truth = {0.0, 0.0, 0.0, 0.0};
  log.rows[0].estimate = {0.2, 0.0, 0.0, 0.0};
  CHECK(leo(log, 0.2) == 0.0);
  log.rows[0].estimate = {0.2000001, 0.0, 0.0, 0.0};
  CHECK(leo(log, 0.2) == 1.0);
}

TEST_CASE("mahalanobis") {
  CHECK(mahalanobis_sq(Vec4(1, 2, 3, 4), Vec4(1, 2, 3, 4), Mat4::Identity()) == 0.0);
  CHECK(mahalanobis_sq(Vec4(1, 1, 1, 1), Vec4::Zero(), Mat4::Identity()) == doctest::Approx(4.0));
  Mat4 singular = Mat4::Identity();
  singular(3, 3) = 0.0;
  CHECK_THROWS_AS(mahalanobis_sq(Vec4::Zero(), Vec4::Zero(), singular), NumericError);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    Mat4 A;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) A(a, b) = g(rng);
    const Mat4 S = A * A.transpose() + 0.1 * Mat4::Identity();
    const Vec4 x(g(rng), g(rng), g(rng), g(rng)), xh(g(rng), g(rng), g(rng), g(rng));
    const double m = mahalanobis_sq(x, xh, S);
    CHECK(m >= 0.0);
    const Vec4 e = x - xh;
    CHECK(m == doctest::Approx(e.dot(S.inverse() * e)).epsilon(1e-6));
    CHECK(gaussian_nll(x, xh, S) == doctest::Approx(oracles::nll_explicit(e, S)).epsilon(1e-6));
  }
}

TEST_CASE("chi-square(4) cdf") {
  CHECK(chi2_cdf_4(0.0) == 0.0);
  CHECK(chi2_cdf_4(4.0) == doctest::Approx(1.0 - 3.0 * std::exp(-2.0)).epsilon(1e-14));
  CHECK(chi2_cdf_4(4.0) == doctest::Approx(0.5940).epsilon(1e-4));
  CHECK_THROWS_AS(chi2_cdf_4(-1.0), std::domain_error);
  double prev = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double x = 0.1 * i;
    const double f = chi2_cdf_4(x);
    CHECK(std::abs(f - oracles::chi2_4_cdf_quadrature(x)) < 1e-9);
    CHECK(f >= prev);
    prev = f;
  }
  CHECK(chi2_cdf_4(200.0) == doctest::Approx(1.0));
  for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) CHECK(chi2_cdf_4(chi2_quantile_4(p)) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("calibration on i.i.d. chi-square samples shrinks with sample count") {
  std::mt19937_64 rng(3);
  std::chi_squared_distribution<double> chi(4.0);
  std::vector<double> mses;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    std::vector<double> xi(n);
    for (auto& v : xi) v = chi(rng);
    const auto rep = calibration_report(xi);
    CHECK(rep.levels.size() == 200);
    CHECK(rep.levels.front() == doctest::Approx(1.0 / 201));
    for (std::size_t i = 1; i < rep.empirical.size(); ++i) {
      CHECK(rep.empirical[i] >= rep.empirical[i - 1]);
      CHECK(rep.theoretical[i] >= rep.theoretical[i - 1]);
    }
    mses.push_back(rep.mse);
  }
  CHECK(mses[0] > mses[1]);
  CHECK(mses[1] > mses[2]);
  CHECK(mses[2] < 1e-4);
}

TEST_CASE("calibration failure modes") {
  std::vector<double> zeros(1000, 0.0);
  const auto over = calibration_report(zeros);
  CHECK(over.mse > 0.1);
  for (double e : over.empirical) CHECK(e == 1.0);

  // Doubling every covariance halves xi: empirical CDF sits above theory.
  const auto log = calibrated_log(3000, 1.0, 4);
  const auto doubled = calibrated_log(3000, 2.0, 4);
  const auto a = calibration_report(log);
  const auto b = calibration_report(doubled);
  CHECK(a.used == 3000);
  CHECK(a.mse < 1e-3);
  for (std::size_t i = 0; i < b.levels.size(); ++i) CHECK(b.empirical[i] >= a.empirical[i]);
  CHECK(b.empirical[100] > b.theoretical[100]);
  // An underestimated covariance inflates xi: empirical CDF below theory.
  const auto halved = calibration_report(calibrated_log(3000, 0.5, 4));
  for (std::size_t i = 0; i < 50; ++i) CHECK(halved.empirical[i] < halved.theoretical[i]);

  TrackLog small = calibrated_log(50, 1.0, 5);
  CHECK_THROWS_AS(calibration_report(small), InvalidSpec);

  // A frame with a singular covariance is excluded and counted.
  TrackLog bad = calibrated_log(200, 1.0, 6);
  bad.rows[7].covariance = Mat4::Zero();
  const auto c = calibration_report(bad);
  CHECK(c.used == 199);
  CHECK(c.excluded == 1);
}

TEST_CASE("nll curve") {
  TrackLog log = offset_log({0, 0});
  CHECK(gaussian_nll(Vec4::Zero(), Vec4::Zero(), Mat4::Identity()) == 0.0);
  CHECK(nll_curve(log).per_frame[0] == 0.0);

  const Vec4 x(1, 2, 3, 4), xh(1.1, 1.9, 3.3, 4.0);
  const auto cov = uncertainty::build_covariance(Vec4(0.5, 0.4, 1.0, 0.7), uncertainty::Vec6::Constant(0.1));
  CHECK(gaussian_nll(x, xh, cov.sigma) == doctest::Approx(uncertainty::gaussian_nll(x, xh, cov.factor)).epsilon(1e-10));

  // Transient: early frames with larger errors raise the all-frame mean.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  TrackLog tr;
  for (int e = 0; e < 3; ++e) {
    for (int f = 0; f < 100; ++f) {
      TrackRow r;
      r.episode = e;
      r.frame = f;
      r.timestamp = f / 15.0;
      const double s = f < 10 ? 1.0 : 0.1;  // error scale
      r.truth = {0, 2, 0, 0};
      r.estimate = {s * g(rng), 2 + s * g(rng), s * g(rng), s * g(rng)};
      r.covariance = 0.01 * Mat4::Identity();
      tr.rows.push_back(r);
    }
  }
  const auto curve = nll_curve(tr);
  CHECK(curve.per_frame.size() == 100);
  CHECK(curve.counts[5] == 3);
  CHECK(curve.running_mean.back() == doctest::Approx(mean_nll(tr, 0)).epsilon(1e-12));
  CHECK(mean_nll(tr, 10) < mean_nll(tr, 0));
  CHECK(mean_nll(tr, 20) < curve.per_frame[0]);
}

TEST_CASE("track log CSV round trip and validation") {
  const auto log = calibrated_log(300, 1.0, 8);
  const fs::path dir = fs::temp_directory_path() / "radartrack_test_eval";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_track_log(dir / "a.csv", log);
  const auto back = read_track_log(dir / "a.csv");
  REQUIRE(back.rows.size() == log.rows.size());
  CHECK(back.method == log.method);
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    CHECK(back.rows[i].estimate == log.rows[i].estimate);
    CHECK((back.rows[i].covariance - log.rows[i].covariance).norm() == 0.0);
    CHECK(back.rows[i].episode == log.rows[i].episode);
  }
  write_track_log(dir / "b.csv", back);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  TrackLog bad = log;
  std::swap(bad.rows[3].timestamp, bad.rows[4].timestamp);
  CHECK_THROWS_AS(bad.validate(), InvalidSpec);
  fs::remove_all(dir);
}

TEST_CASE("report emission") {
  const fs::path dir = fs::temp_directory_path() / "radartrack_test_report";
  fs::remove_all(dir);
  CHECK_THROWS_AS(emit_report({}, dir, ReportOptions{}), InvalidSpec);
  std::vector<TrackLog> logs{calibrated_log(600, 1.0, 9), calibrated_log(600, 3.0, 10)};
  logs[1].method = "wide";
  const auto table = emit_report(logs, dir, ReportOptions{});
  REQUIRE(table.size() == 2);
  CHECK(table[0].method == "calibrated");
  CHECK(table[1].calibration_mse > table[0].calibration_mse);
  for (const char* f : {"metrics.csv", "nll_curve.csv", "calibration.csv", "velocity_uncertainty.csv"}) {
    CHECK(fs::exists(dir / f));
  }
  const auto metrics = slurp(dir / "metrics.csv");
  const auto header = metrics.substr(0, metrics.find('\n'));
  CHECK(header.find("rmse_position_cm") != std::string::npos);
  CHECK(header.find("leo_0.2_percent") != std::string::npos);
  CHECK(header.find("rmse_velocity_cm_s") != std::string::npos);
  const auto first = slurp(dir / "metrics.csv") + slurp(dir / "calibration.csv") + slurp(dir / "nll_curve.csv");
  emit_report(logs, dir, ReportOptions{});
  CHECK(slurp(dir / "metrics.csv") + slurp(dir / "calibration.csv") + slurp(dir / "nll_curve.csv") == first);

  // Identical logs give identical rows.
  std::vector<TrackLog> same{logs[0], logs[0]};
  const auto t2 = emit_report(same, dir, ReportOptions{});
  CHECK(t2[0].rmse_position_cm == t2[1].rmse_position_cm);
  CHECK(t2[0].nll == t2[1].nll);
  fs::remove_all(dir);
}
