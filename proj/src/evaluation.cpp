#include "radartrack/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace radartrack::evaluation {

namespace {

Vec4 to_vec(const State& s) { return {s[0], s[1], s[2], s[3]}; }

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_f(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

constexpr int kUpper[10][2] = {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 1}, {1, 2}, {1, 3}, {2, 2}, {2, 3}, {3, 3}};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void TrackLog::validate() const {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    if (a.episode == b.episode && !(b.timestamp > a.timestamp)) {
      throw InvalidSpec("track log: timestamps must increase within an episode");
    }
  }
  for (const auto& r : rows) {
    if ((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-6) {
      throw InvalidSpec("track log: covariance is not symmetric");
    }
  }
}

void write_track_log(const std::filesystem::path& path, const TrackLog& log) {
  if (log.method.find(',') != std::string::npos) throw InvalidSpec("track log: method name contains a comma");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out = open_out(path);
  out << "method,episode,frame,timestamp,x,y,vx,vy,x_hat,y_hat,vx_hat,vy_hat,"
         "c00,c01,c02,c03,c11,c12,c13,c22,c23,c33,missed\n";
  for (const auto& r : log.rows) {
    out << log.method << ',' << r.episode << ',' << r.frame << ',' << fmt_g(r.timestamp);
    for (double v : r.truth) out << ',' << fmt_g(v);
    for (double v : r.estimate) out << ',' << fmt_g(v);
    for (const auto& ij : kUpper) out << ',' << fmt_g(r.covariance(ij[0], ij[1]));
    out << ',' << (r.missed ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TrackLog read_track_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("cannot read track log " + path.string());
  TrackLog log;
  std::string line;
  std::getline(in, line);
  std::vector<std::string> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    cells.clear();
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 23) throw InvalidSpec(path.string() + ": bad column count on line " + std::to_string(line_no));
    auto num = [&](std::size_t i) {
      char* end = nullptr;
      const double v = std::strtod(cells[i].c_str(), &end);
      if (end == cells[i].c_str()) throw InvalidSpec(path.string() + ": bad number on line " + std::to_string(line_no));
      return v;
    };
    if (log.rows.empty()) log.method = cells[0];
    TrackRow r;
    r.episode = static_cast<int>(num(1));
    r.frame = static_cast<int>(num(2));
    r.timestamp = num(3);
    for (std::size_t k = 0; k < 4; ++k) {
      r.truth[k] = num(4 + k);
      r.estimate[k] = num(8 + k);
    }
    for (std::size_t k = 0; k < 10; ++k) {
      const double v = num(12 + k);
      r.covariance(kUpper[k][0], kUpper[k][1]) = v;
      r.covariance(kUpper[k][1], kUpper[k][0]) = v;
    }
    r.missed = num(22) != 0.0;
    log.rows.push_back(r);
  }
  return log;
}

double rmse(const TrackLog& log, Component component) {
  if (log.rows.empty()) throw InvalidSpec("rmse: empty track log");
  const std::size_t o = component == Component::position ? 0 : 2;
  double sum = 0.0;
  for (const auto& r : log.rows) {
    const double dx = r.estimate[o] - r.truth[o];
    const double dy = r.estimate[o + 1] - r.truth[o + 1];
    sum += dx * dx + dy * dy;
  }
  return 100.0 * std::sqrt(sum / static_cast<double>(log.rows.size()));
}

double leo(const TrackLog& log, double radius) {
  if (log.rows.empty()) throw InvalidSpec("leo: empty track log");
  std::size_t outside = 0;
  for (const auto& r : log.rows) {
    if (std::hypot(r.estimate[0] - r.truth[0], r.estimate[1] - r.truth[1]) > radius) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(log.rows.size());
}

double mahalanobis_sq(const Vec4& x, const Vec4& x_hat, const Mat4& sigma) {
  const Eigen::LLT<Mat4> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.allFinite()) throw NumericError("mahalanobis: covariance is not PD");
  const Vec4 u = llt.matrixL().solve(x - x_hat);
  return u.squaredNorm();
}

double chi2_cdf_4(double x) {
  if (x < 0.0 || std::isnan(x)) throw std::domain_error("chi2_cdf_4: x must be >= 0");
  return -std::expm1(-0.5 * x) - 0.5 * x * std::exp(-0.5 * x);
}

double chi2_quantile_4(double p) {
  if (!(p >= 0.0 && p < 1.0)) throw std::domain_error("chi2_quantile_4: p must lie in [0, 1)");
  double lo = 0.0, hi = 1.0;
  while (chi2_cdf_4(hi) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf_4(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

CalibrationReport calibration_report(std::span<const double> xi) {
  CalibrationReport rep;
  std::vector<double> sorted(xi.begin(), xi.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  rep.used = sorted.size();
  if (sorted.empty()) throw InvalidSpec("calibration_report: no samples");
  for (int k = 1; k <= kCalibrationLevels; ++k) {
    const double p = static_cast<double>(k) / (kCalibrationLevels + 1);
    const double t = chi2_quantile_4(p);
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    const double emp = static_cast<double>(below) / n;
    rep.levels.push_back(p);
    rep.thresholds.push_back(t);
    rep.theoretical.push_back(p);
    rep.empirical.push_back(emp);
    rep.mse += (emp - p) * (emp - p);
  }
  rep.mse /= kCalibrationLevels;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = chi2_cdf_4(std::max(0.0, sorted[i]));
    rep.ks = std::max({rep.ks, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  return rep;
}

CalibrationReport calibration_report(const TrackLog& log, int first_frame) {
  std::vector<double> xi;
  std::size_t excluded = 0;
  for (const auto& r : log.rows) {
    if (r.frame < first_frame) continue;
    try {
      xi.push_back(mahalanobis_sq(to_vec(r.truth), to_vec(r.estimate), r.covariance));
    } catch (const NumericError&) {
      ++excluded;
    }
  }
  if (xi.size() < 100) throw InvalidSpec("calibration_report: need at least 100 usable frames");
  CalibrationReport rep = calibration_report(xi);
  rep.excluded = excluded;
  return rep;
}

double gaussian_nll(const Vec4& x, const Vec4& x_hat, const Mat4& sigma) {
  const Eigen::LLT<Mat4> llt(sigma);
  if (llt.info() != Eigen::Success || !sigma.allFinite()) throw NumericError("nll: covariance is not PD");
  const Mat4 L = llt.matrixL();
  const Vec4 u = L.triangularView<Eigen::Lower>().solve(x - x_hat);
  double log_det = 0.0;
  for (int i = 0; i < 4; ++i) log_det += 2.0 * std::log(L(i, i));
  return u.squaredNorm() + log_det;
}

NllCurve nll_curve(const TrackLog& log) {
  NllCurve c;
  for (const auto& r : log.rows) {
    const auto f = static_cast<std::size_t>(r.frame);
    if (f >= c.per_frame.size()) {
      c.per_frame.resize(f + 1, 0.0);
      c.counts.resize(f + 1, 0);
    }
    try {
      c.per_frame[f] += gaussian_nll(to_vec(r.truth), to_vec(r.estimate), r.covariance);
      ++c.counts[f];
    } catch (const NumericError&) {
      ++c.excluded;
    }
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < c.per_frame.size(); ++f) {
    if (c.counts[f]) c.per_frame[f] /= static_cast<double>(c.counts[f]);
    if (c.counts[f]) {
      sum += c.per_frame[f];
      ++n;
    }
    c.running_mean.push_back(n ? sum / static_cast<double>(n) : 0.0);
  }
  return c;
}

double mean_nll(const TrackLog& log, int first_frame) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : log.rows) {
    if (r.frame < first_frame) continue;
    try {
      sum += gaussian_nll(to_vec(r.truth), to_vec(r.estimate), r.covariance);
      ++n;
    } catch (const NumericError&) {
    }
  }
  if (n == 0) throw InvalidSpec("mean_nll: no usable frames");
  return sum / static_cast<double>(n);
}

MethodMetrics compute_metrics(const TrackLog& log, const ReportOptions& options) {
  MethodMetrics m;
  m.method = log.method;
  m.rmse_position_cm = rmse(log, Component::position);
  m.rmse_velocity_cm_s = rmse(log, Component::velocity);
  m.leo_percent = 100.0 * leo(log, 0.2);
  const CalibrationReport cal = calibration_report(log, options.calibration_first_frame);
  m.calibration_mse = cal.mse;
  m.ks = cal.ks;
  m.excluded = cal.excluded;
  m.nll = mean_nll(log, options.nll_first_frame);
  m.frames = log.rows.size();
  return m;
}

std::vector<MethodMetrics> emit_report(std::span<const TrackLog> logs, const std::filesystem::path& out_dir,
                                       const ReportOptions& options) {
  if (logs.empty()) throw InvalidSpec("emit_report: no track logs");
  std::filesystem::create_directories(out_dir);
  std::vector<MethodMetrics> metrics;
  std::vector<CalibrationReport> cals;
  std::vector<NllCurve> curves;
  for (const auto& log : logs) {
    metrics.push_back(compute_metrics(log, options));
    cals.push_back(calibration_report(log, options.calibration_first_frame));
    curves.push_back(nll_curve(log));
  }

  {
    std::ofstream out = open_out(out_dir / "metrics.csv");
    out << "method,rmse_position_cm,leo_0.2_percent,rmse_velocity_cm_s,calibration_mse,ks_distance,"
           "mean_nll_from_frame_" << options.nll_first_frame << ",frames,excluded\n";
    for (const auto& m : metrics) {
      out << m.method << ',' << fmt_f(m.rmse_position_cm, 3) << ',' << fmt_f(m.leo_percent, 3) << ','
          << fmt_f(m.rmse_velocity_cm_s, 3) << ',' << fmt_f(m.calibration_mse, 6) << ',' << fmt_f(m.ks, 6) << ','
          << fmt_f(m.nll, 4) << ',' << m.frames << ',' << m.excluded << '\n';
    }
  }
  {
    std::ofstream out = open_out(out_dir / "nll_curve.csv");
    out << "frame";
    for (const auto& log : logs) out << ',' << log.method << "_nll," << log.method << "_running_mean";
    out << '\n';
    std::size_t frames = 0;
    for (const auto& c : curves) frames = std::max(frames, c.per_frame.size());
    for (std::size_t f = 0; f < frames; ++f) {
      out << f;
      for (const auto& c : curves) {
        if (f < c.per_frame.size()) {
          out << ',' << fmt_g(c.per_frame[f]) << ',' << fmt_g(c.running_mean[f]);
        } else {
          out << ",,";
        }
      }
      out << '\n';
    }
  }
  {
    std::ofstream out = open_out(out_dir / "calibration.csv");
    out << "level,threshold,theoretical";
    for (const auto& log : logs) out << ',' << log.method;
    out << '\n';
    for (int k = 0; k < kCalibrationLevels; ++k) {
      const auto i = static_cast<std::size_t>(k);
      out << fmt_g(cals[0].levels[i]) << ',' << fmt_g(cals[0].thresholds[i]) << ',' << fmt_g(cals[0].theoretical[i]);
      for (const auto& c : cals) out << ',' << fmt_g(c.empirical[i]);
      out << '\n';
    }
  }
  {
    std::ofstream out = open_out(out_dir / "velocity_uncertainty.csv");
    out << "method,episode,frame,timestamp,vy,vy_hat,vy_std\n";
    for (const auto& log : logs) {
      for (const auto& r : log.rows) {
        out << log.method << ',' << r.episode << ',' << r.frame << ',' << fmt_g(r.timestamp) << ','
            << fmt_g(r.truth[3]) << ',' << fmt_g(r.estimate[3]) << ','
            << fmt_g(std::sqrt(std::max(0.0, r.covariance(3, 3)))) << '\n';
      }
    }
  }
  return metrics;
}

}  // namespace radartrack::evaluation
