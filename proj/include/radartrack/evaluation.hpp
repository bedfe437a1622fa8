#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radartrack/common.hpp"

namespace radartrack::evaluation {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

/// One tracked frame.
struct TrackRow {
  int episode = 0;
  int frame = 0;
  double timestamp = 0.0;
  State truth{};
  State estimate{};
  Mat4 covariance = Mat4::Identity();
  bool missed = false;  // no detection / target not visible this frame
};

/// Output of a tracker on a set of episodes, rows ordered by episode, then
/// frame.
struct TrackLog {
  std::string method;
  std::vector<TrackRow> rows;

  /// Timestamps increase within each episode and covariances are symmetric.
  void validate() const;
};

/// CSV columns: method,episode,frame,timestamp,x,y,vx,vy,x_hat,y_hat,vx_hat,
/// vy_hat, then the upper triangle of the covariance row by row (c00 c01 c02
/// c03 c11 c12 c13 c22 c23 c33), then missed (0/1). Numbers use %.17g.
void write_track_log(const std::filesystem::path& path, const TrackLog& log);
TrackLog read_track_log(const std::filesystem::path& path);

enum class Component { position, velocity };

/// sqrt(mean ||e||^2) over the 2-D position or velocity error, in cm or
/// cm/s. Throws InvalidSpec on an empty log.
double rmse(const TrackLog& log, Component component);

/// Fraction of frames whose position error is strictly larger than
/// `radius` meters.
double leo(const TrackLog& log, double radius = 0.2);

/// (x - x_hat)^T sigma^{-1} (x - x_hat) through a Cholesky solve. Throws
/// NumericError when sigma is not positive definite.
double mahalanobis_sq(const Vec4& x, const Vec4& x_hat, const Mat4& sigma);

/// Chi-square CDF with 4 degrees of freedom, 1 - exp(-x/2) (1 + x/2).
/// Throws std::domain_error for negative x.
double chi2_cdf_4(double x);
/// Inverse of chi2_cdf_4 by bisection, p in [0, 1).
double chi2_quantile_4(double p);

/// Empirical versus theoretical CDF of xi on 200 probability levels
/// p_k = k / 201 (thresholds are the chi2_4 quantiles of p_k).
struct CalibrationReport {
  std::vector<double> levels;
  std::vector<double> thresholds;
  std::vector<double> empirical;
  std::vector<double> theoretical;
  double mse = 0.0;        // mean of (empirical - theoretical)^2 over the grid
  double ks = 0.0;         // sup |F_emp - F| over the samples
  std::size_t used = 0;
  std::size_t excluded = 0;  // frames with a non-PD covariance
};

inline constexpr int kCalibrationLevels = 200;

CalibrationReport calibration_report(std::span<const double> xi);
/// Uses frames with index >= first_frame. Throws InvalidSpec with fewer than
/// 100 usable frames.
CalibrationReport calibration_report(const TrackLog& log, int first_frame = 0);

/// Per-frame Gaussian NLL e^T S^{-1} e + ln|S| averaged over episodes at each
/// frame index, and its running mean.
struct NllCurve {
  std::vector<double> per_frame;
  std::vector<double> running_mean;
  std::vector<std::size_t> counts;
  std::size_t excluded = 0;
};

double gaussian_nll(const Vec4& x, const Vec4& x_hat, const Mat4& sigma);
NllCurve nll_curve(const TrackLog& log);
/// Mean NLL over all frames with index >= first_frame.
double mean_nll(const TrackLog& log, int first_frame);

struct ReportOptions {
  int nll_first_frame = 20;   // excludes the network's start-up transient
  int calibration_first_frame = 0;
};

struct MethodMetrics {
  std::string method;
  double rmse_position_cm = 0.0;
  double leo_percent = 0.0;
  double rmse_velocity_cm_s = 0.0;
  double calibration_mse = 0.0;
  double ks = 0.0;
  double nll = 0.0;
  std::size_t frames = 0;
  std::size_t excluded = 0;
};

MethodMetrics compute_metrics(const TrackLog& log, const ReportOptions& options);

/// Writes metrics.csv (one row per log), nll_curve.csv, calibration.csv and
/// velocity_uncertainty.csv into `out_dir`. Throws InvalidSpec for an empty
/// list.
std::vector<MethodMetrics> emit_report(std::span<const TrackLog> logs, const std::filesystem::path& out_dir,
                                       const ReportOptions& options = {});

}  // namespace radartrack::evaluation
