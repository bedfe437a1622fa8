#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "radartrack/evaluation.hpp"
#include "radartrack/radar_sim.hpp"
#include "radartrack/ukf.hpp"

namespace radartrack::baseline {

using radar_sim::RadarParams;
using radar_sim::RdaMap;

struct Detection {
  double range = 0.0;    // m
  double azimuth = 0.0;  // rad, from +y toward +x
  double x = 0.0;
  double y = 0.0;
  double doppler = 0.0;  // m/s, positive when receding
  int cluster_size = 0;
  double power = 0.0;    // summed bin power of the cluster
};

struct DetectionParams {
  double threshold_factor = 12.0;  // multiple of the estimated noise mean
  double eps = 0.15;               // DBSCAN radius in the (x, y, w v) space
  int min_pts = 4;
  double doppler_weight = 0.5;     // w: meters per m/s in the clustering space
};

/// Noise mean from the median of every 97th bin; for exponentially
/// distributed noise the median is mean * ln 2.
double estimate_noise_mean(const RdaMap& map);

/// Bins with power above `threshold` become points at their physical
/// (range, azimuth, Doppler); DBSCAN groups them and every cluster yields a
/// detection at its power-weighted polar centroid. Sorted by descending
/// power.
std::vector<Detection> extract_detections(const RdaMap& map, const RadarParams& radar, double threshold,
                                          double eps, int min_pts, double doppler_weight = 0.5);
std::vector<Detection> extract_detections(const RdaMap& map, const RadarParams& radar,
                                          const DetectionParams& params);

/// Everything the baseline tracker needs; serialized as ukf_params.json.
struct TrackerParams {
  double q = 0.5;
  double sigma_range = 0.05;
  double sigma_azimuth = 0.05;
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
  DetectionParams detection;
  radar_sim::Rect area;
  double roi_margin = 0.3;     // detections outside area + margin are ignored
  double gate = 13.8;          // squared Mahalanobis gate on the innovation
  int max_missed = 15;         // re-initialize after this many frames without an update
  double init_variance = 1.0;  // P_0 = init_variance * I

  ukf::UkfConfig ukf_config() const;
  void validate() const;
};

nlohmann::json to_json(const TrackerParams& p);
TrackerParams tracker_params_from_json(const nlohmann::json& j);

/// Runs the tracker over one episode of precomputed detections. Every frame
/// yields a row; before the first detection the estimate is the area center
/// at rest with covariance init_variance * I.
std::vector<evaluation::TrackRow> run_tracker(std::span<const double> timestamps,
                                              std::span<const State> truth,
                                              std::span<const std::vector<Detection>> detections,
                                              const TrackerParams& params, int episode = 0);

/// Source of RDA maps for tuning: (episode, frame) -> map.
using MapSource = std::function<RdaMap(std::size_t episode, std::size_t frame)>;

struct TuningData {
  std::vector<std::vector<double>> timestamps;
  std::vector<std::vector<State>> truth;
  MapSource maps;
  RadarParams radar;
};

struct TuningGrid {
  std::vector<double> q{0.05, 0.2, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> sigma_range{0.03, 0.06, 0.12};
  std::vector<double> sigma_azimuth{0.02, 0.05, 0.1};
  std::vector<double> threshold_factor{8.0, 12.0, 16.0};
  std::vector<double> eps{0.1, 0.2};
  std::vector<int> min_pts{3, 6};

  void validate() const;
};

nlohmann::json to_json(const TuningGrid& g);
TuningGrid tuning_grid_from_json(const nlohmann::json& j);

struct TuningEntry {
  TrackerParams params;
  double rmse_position_cm = 0.0;  // infinity when the filter failed
  double rmse_velocity_cm_s = 0.0;
};

struct TuningResult {
  TrackerParams best;
  std::vector<TuningEntry> entries;  // in grid order
};

/// Exhaustive search. Every map is generated once and detections are cached
/// per detection setting; combinations are ranked by position RMSE, then
/// velocity RMSE, then smallest q. Throws NumericError when every
/// combination fails.
TuningResult grid_search_tune(const TuningData& data, const TuningGrid& grid, const TrackerParams& base);

/// Same ranking over already extracted detections, one detection setting.
TuningResult grid_search_tune(std::span<const std::vector<double>> timestamps,
                              std::span<const std::vector<State>> truth,
                              std::span<const std::vector<std::vector<Detection>>> detections,
                              const TuningGrid& grid, const TrackerParams& base);

}  // namespace radartrack::baseline
