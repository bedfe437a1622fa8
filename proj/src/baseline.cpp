#include "radartrack/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "radartrack/dbscan.hpp"

namespace radartrack::baseline {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

bool in_roi(const Detection& d, const TrackerParams& p) {
  const auto& a = p.area;
  return d.x >= a.x_min - p.roi_margin && d.x <= a.x_max + p.roi_margin && d.y >= a.y_min - p.roi_margin &&
         d.y <= a.y_max + p.roi_margin;
}

ukf::UkfState initial_state(double x, double y, const TrackerParams& p) {
  ukf::UkfState s;
  s.mean = ukf::Vec4(x, y, 0.0, 0.0);
  s.P = p.init_variance * ukf::Mat4::Identity();
  return s;
}

// Position RMSE (cm) and velocity RMSE (cm/s) over every frame of every
// episode.
std::pair<double, double> score(std::span<const std::vector<double>> timestamps,
                                std::span<const std::vector<State>> truth,
                                std::span<const std::vector<std::vector<Detection>>> detections,
                                const TrackerParams& params) {
  double pos = 0.0, vel = 0.0;
  std::size_t n = 0;
  for (std::size_t e = 0; e < timestamps.size(); ++e) {
    const auto rows = run_tracker(timestamps[e], truth[e], detections[e], params, static_cast<int>(e));
    for (const auto& r : rows) {
      const double dx = r.estimate[0] - r.truth[0], dy = r.estimate[1] - r.truth[1];
      const double dvx = r.estimate[2] - r.truth[2], dvy = r.estimate[3] - r.truth[3];
      pos += dx * dx + dy * dy;
      vel += dvx * dvx + dvy * dvy;
    }
    n += rows.size();
  }
  const double inf = std::numeric_limits<double>::infinity();
  if (n == 0) return {inf, inf};
  pos = 100.0 * std::sqrt(pos / static_cast<double>(n));
  vel = 100.0 * std::sqrt(vel / static_cast<double>(n));
  if (!std::isfinite(pos) || !std::isfinite(vel)) return {inf, inf};
  return {pos, vel};
}

bool better(const TuningEntry& a, const TuningEntry& b) {
  if (a.rmse_position_cm != b.rmse_position_cm) return a.rmse_position_cm < b.rmse_position_cm;
  if (a.rmse_velocity_cm_s != b.rmse_velocity_cm_s) return a.rmse_velocity_cm_s < b.rmse_velocity_cm_s;
  return a.params.q < b.params.q;
}

void search_filter_grid(std::span<const std::vector<double>> timestamps, std::span<const std::vector<State>> truth,
                        std::span<const std::vector<std::vector<Detection>>> detections, const TuningGrid& grid,
                        const TrackerParams& base, std::vector<TuningEntry>& out) {
  const double inf = std::numeric_limits<double>::infinity();
  for (double q : grid.q) {
    for (double sr : grid.sigma_range) {
      for (double sa : grid.sigma_azimuth) {
        TuningEntry e;
        e.params = base;
        e.params.q = q;
        e.params.sigma_range = sr;
        e.params.sigma_azimuth = sa;
        try {
          std::tie(e.rmse_position_cm, e.rmse_velocity_cm_s) = score(timestamps, truth, detections, e.params);
        } catch (const NumericError&) {
          e.rmse_position_cm = e.rmse_velocity_cm_s = inf;
        }
        out.push_back(e);
      }
    }
  }
}

TuningResult pick_best(std::vector<TuningEntry> entries) {
  TuningResult r;
  r.entries = std::move(entries);
  const TuningEntry* best = nullptr;
  for (const auto& e : r.entries) {
    if (!std::isfinite(e.rmse_position_cm)) continue;
    if (!best || better(e, *best)) best = &e;
  }
  if (!best) throw NumericError("grid search: every parameter combination diverged");
  r.best = best->params;
  return r;
}

}  // namespace

double estimate_noise_mean(const RdaMap& map) {
  const auto p = map.power();
  std::vector<float> sample;
  for (std::size_t i = 0; i < p.size(); i += 97) sample.push_back(p[i]);
  if (sample.empty()) return 0.0;
  auto mid = sample.begin() + static_cast<std::ptrdiff_t>(sample.size() / 2);
  std::nth_element(sample.begin(), mid, sample.end());
  return static_cast<double>(*mid) / std::log(2.0);
}

std::vector<Detection> extract_detections(const RdaMap& map, const RadarParams& radar, double threshold,
                                          double eps, int min_pts, double doppler_weight) {
  if (!(threshold > 0.0) || !(eps > 0.0) || min_pts < 1 || doppler_weight < 0.0) {
    throw InvalidSpec("extract_detections: parameters must be positive");
  }
  struct Bin {
    double range, azimuth, doppler, power;
  };
  std::vector<Bin> bins;
  std::vector<dbscan::Point> points;
  const auto power = map.power();
  const int R = map.range_bins(), D = map.doppler_bins(), A = map.azimuth_bins();
  for (int r = 0; r < R; ++r) {
    for (int d = 0; d < D; ++d) {
      const std::size_t base = map.index(r, d, 0);
      for (int a = 0; a < A; ++a) {
        const float pw = power[base + static_cast<std::size_t>(a)];
        if (!(pw > threshold)) continue;
        const double range = radar_sim::range_of_bin(r, radar);
        const double s = std::clamp(radar_sim::sin_azimuth_of_bin(a, radar), -1.0, 1.0);
        const double az = std::asin(s);
        const double v = radar_sim::velocity_of_bin(d, radar);
        bins.push_back({range, az, v, pw});
        points.push_back({range * s, range * std::cos(az), doppler_weight * v});
      }
    }
  }
  const auto labels = dbscan::cluster(points, eps, min_pts);
  const int k = dbscan::cluster_count(labels);
  std::vector<Detection> out(static_cast<std::size_t>(k));
  std::vector<double> wr(out.size(), 0.0), wa(out.size(), 0.0), wv(out.size(), 0.0);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (labels[i] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[i]);
    out[c].power += bins[i].power;
    out[c].cluster_size += 1;
    wr[c] += bins[i].power * bins[i].range;
    wa[c] += bins[i].power * bins[i].azimuth;
    wv[c] += bins[i].power * bins[i].doppler;
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    Detection& d = out[c];
    d.range = wr[c] / d.power;
    d.azimuth = wa[c] / d.power;
    d.doppler = wv[c] / d.power;
    d.x = d.range * std::sin(d.azimuth);
    d.y = d.range * std::cos(d.azimuth);
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.power > b.power; });
  return out;
}

std::vector<Detection> extract_detections(const RdaMap& map, const RadarParams& radar,
                                          const DetectionParams& params) {
  const double noise = estimate_noise_mean(map);
  const double threshold = params.threshold_factor * std::max(noise, 1e-12);
  return extract_detections(map, radar, threshold, params.eps, params.min_pts, params.doppler_weight);
}

ukf::UkfConfig TrackerParams::ukf_config() const {
  ukf::UkfConfig c;
  c.q = q;
  c.R = ukf::UkfConfig::diagonal_r(sigma_range, sigma_azimuth);
  c.alpha = alpha;
  c.beta = beta;
  c.kappa = kappa;
  return c;
}

void TrackerParams::validate() const {
  if (!(sigma_range > 0.0) || !(sigma_azimuth > 0.0)) throw InvalidSpec("tracker: noise sigmas must be positive");
  ukf_config().validate();
  if (!(detection.threshold_factor > 0.0) || !(detection.eps > 0.0) || detection.min_pts < 1 ||
      detection.doppler_weight < 0.0) {
    throw InvalidSpec("tracker: invalid detection parameters");
  }
  if (!(gate > 0.0) || max_missed < 0 || !(init_variance > 0.0) || roi_margin < 0.0) {
    throw InvalidSpec("tracker: invalid gating parameters");
  }
}

json to_json(const TrackerParams& p) {
  return {{"q", p.q},
          {"sigma_range", p.sigma_range},
          {"sigma_azimuth", p.sigma_azimuth},
          {"alpha", p.alpha},
          {"beta", p.beta},
          {"kappa", p.kappa},
          {"threshold_factor", p.detection.threshold_factor},
          {"eps", p.detection.eps},
          {"min_pts", p.detection.min_pts},
          {"doppler_weight", p.detection.doppler_weight},
          {"area", {{"x_min", p.area.x_min}, {"x_max", p.area.x_max}, {"y_min", p.area.y_min}, {"y_max", p.area.y_max}}},
          {"roi_margin", p.roi_margin},
          {"gate", p.gate},
          {"max_missed", p.max_missed},
          {"init_variance", p.init_variance}};
}

TrackerParams tracker_params_from_json(const json& j) {
  TrackerParams p;
  maybe(j, "q", p.q);
  maybe(j, "sigma_range", p.sigma_range);
  maybe(j, "sigma_azimuth", p.sigma_azimuth);
  maybe(j, "alpha", p.alpha);
  maybe(j, "beta", p.beta);
  maybe(j, "kappa", p.kappa);
  maybe(j, "threshold_factor", p.detection.threshold_factor);
  maybe(j, "eps", p.detection.eps);
  maybe(j, "min_pts", p.detection.min_pts);
  maybe(j, "doppler_weight", p.detection.doppler_weight);
  if (j.contains("area")) {
    const auto& a = j.at("area");
    maybe(a, "x_min", p.area.x_min);
    maybe(a, "x_max", p.area.x_max);
    maybe(a, "y_min", p.area.y_min);
    maybe(a, "y_max", p.area.y_max);
  }
  maybe(j, "roi_margin", p.roi_margin);
  maybe(j, "gate", p.gate);
  maybe(j, "max_missed", p.max_missed);
  maybe(j, "init_variance", p.init_variance);
  p.validate();
  return p;
}

std::vector<evaluation::TrackRow> run_tracker(std::span<const double> timestamps, std::span<const State> truth,
                                              std::span<const std::vector<Detection>> detections,
                                              const TrackerParams& params, int episode) {
  if (timestamps.size() != truth.size() || timestamps.size() != detections.size()) {
    throw ShapeError("run_tracker: timestamps, truth and detections differ in length");
  }
  const ukf::UkfConfig config = params.ukf_config();
  std::vector<evaluation::TrackRow> rows;
  rows.reserve(timestamps.size());

  bool initialized = false;
  int missed = 0;
  ukf::UkfState state = initial_state(0.5 * (params.area.x_min + params.area.x_max),
                                      0.5 * (params.area.y_min + params.area.y_max), params);
  for (std::size_t f = 0; f < timestamps.size(); ++f) {
    const Detection* chosen = nullptr;
    if (initialized) {
      state = ukf::ukf_predict(state, timestamps[f] - timestamps[f - 1], config);
      double best = params.gate;
      ukf::UkfState best_state;
      for (const auto& d : detections[f]) {
        if (!in_roi(d, params)) continue;
        const auto r = ukf::ukf_innovation(state, {d.range, d.azimuth}, config);
        const double m2 = r.innovation.dot(r.S.ldlt().solve(r.innovation));
        if (m2 < best) {
          best = m2;
          best_state = r.state;
          chosen = &d;
        }
      }
      if (chosen) {
        state = best_state;
        missed = 0;
      } else if (++missed > params.max_missed) {
        initialized = false;
      }
    } else {
      for (const auto& d : detections[f]) {
        if (!in_roi(d, params)) continue;
        chosen = &d;  // detections are sorted by power
        break;
      }
      if (chosen) {
        state = initial_state(chosen->x, chosen->y, params);
        initialized = true;
        missed = 0;
      } else if (f > 0) {
        // Coast without a track: keep the last estimate.
        state.mean.tail<2>().setZero();
      }
    }
    if (!state.mean.allFinite() || !state.P.allFinite()) throw NumericError("run_tracker: non-finite state");

    evaluation::TrackRow row;
    row.episode = episode;
    row.frame = static_cast<int>(f);
    row.timestamp = timestamps[f];
    row.truth = truth[f];
    for (int k = 0; k < 4; ++k) row.estimate[static_cast<std::size_t>(k)] = state.mean(k);
    row.covariance = state.P;
    row.missed = chosen == nullptr;
    rows.push_back(row);
  }
  return rows;
}

void TuningGrid::validate() const {
  if (q.empty() || sigma_range.empty() || sigma_azimuth.empty() || threshold_factor.empty() || eps.empty() ||
      min_pts.empty()) {
    throw InvalidSpec("tuning grid: every axis needs at least one value");
  }
}

json to_json(const TuningGrid& g) {
  return {{"q", g.q},
          {"sigma_range", g.sigma_range},
          {"sigma_azimuth", g.sigma_azimuth},
          {"threshold_factor", g.threshold_factor},
          {"eps", g.eps},
          {"min_pts", g.min_pts}};
}

TuningGrid tuning_grid_from_json(const json& j) {
  TuningGrid g;
  maybe(j, "q", g.q);
  maybe(j, "sigma_range", g.sigma_range);
  maybe(j, "sigma_azimuth", g.sigma_azimuth);
  maybe(j, "threshold_factor", g.threshold_factor);
  maybe(j, "eps", g.eps);
  maybe(j, "min_pts", g.min_pts);
  g.validate();
  return g;
}

TuningResult grid_search_tune(std::span<const std::vector<double>> timestamps,
                              std::span<const std::vector<State>> truth,
                              std::span<const std::vector<std::vector<Detection>>> detections,
                              const TuningGrid& grid, const TrackerParams& base) {
  if (grid.q.empty() || grid.sigma_range.empty() || grid.sigma_azimuth.empty()) {
    throw InvalidSpec("tuning grid: filter axes need at least one value");
  }
  std::vector<TuningEntry> entries;
  search_filter_grid(timestamps, truth, detections, grid, base, entries);
  return pick_best(std::move(entries));
}

TuningResult grid_search_tune(const TuningData& data, const TuningGrid& grid, const TrackerParams& base) {
  grid.validate();
  if (data.timestamps.size() != data.truth.size() || data.timestamps.empty()) {
    throw InvalidSpec("grid search: need at least one episode");
  }
  std::vector<DetectionParams> settings;
  for (double t : grid.threshold_factor)
    for (double e : grid.eps)
      for (int m : grid.min_pts) settings.push_back({t, e, m, base.detection.doppler_weight});

  // cache[setting][episode][frame]
  std::vector<std::vector<std::vector<std::vector<Detection>>>> cache(
      settings.size(), std::vector<std::vector<std::vector<Detection>>>(data.timestamps.size()));
  for (std::size_t e = 0; e < data.timestamps.size(); ++e) {
    for (auto& c : cache) c[e].resize(data.timestamps[e].size());
    for (std::size_t f = 0; f < data.timestamps[e].size(); ++f) {
      const RdaMap map = data.maps(e, f);
      const double threshold_unit = std::max(estimate_noise_mean(map), 1e-12);
      for (std::size_t s = 0; s < settings.size(); ++s) {
        const auto& d = settings[s];
        cache[s][e][f] = extract_detections(map, data.radar, d.threshold_factor * threshold_unit, d.eps, d.min_pts,
                                            d.doppler_weight);
      }
    }
  }

  std::vector<TuningEntry> entries;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    TrackerParams p = base;
    p.detection = settings[s];
    search_filter_grid(data.timestamps, data.truth, cache[s], grid, p, entries);
  }
  return pick_best(std::move(entries));
}

}  // namespace radartrack::baseline
