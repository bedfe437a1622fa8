#pragma once

#include <cstdint>
#include <vector>

#include "radartrack/radar_sim.hpp"

namespace radartrack::radar_sim {

/// Per-episode scene generation: static clutter outside the tracking area,
/// the extended-body target model and bursty target dropouts.
struct SceneConfig {
  double target_rcs = 300.0;
  TargetModel target_model{8, 0.12, 0.08, 0.12, 0.3};
  int clutter_count = 6;
  double clutter_rcs_min = 20.0;
  double clutter_rcs_max = 200.0;
  double clutter_max_range = 4.8;   // m
  double clutter_max_azimuth = 1.1; // rad
  double clutter_margin = 0.3;      // keep-out distance around the area, m
  double noise_floor = 0.05;
  PeakShape peak;
  /// Stationary fraction of frames in which the target is not visible.
  double dropout_probability = 0.05;
  /// Mean length of a dropout burst, in frames.
  double dropout_mean_burst = 3.0;

  void validate() const;
};

/// Deterministic generator for one episode. Every frame can be regenerated
/// independently from (episode seed, frame index).
class EpisodeSimulator {
 public:
  EpisodeSimulator(RadarParams params, SceneConfig config, TrajectorySpec trajectory,
                   std::uint64_t scene_seed);

  std::size_t frame_count() const { return states_.size(); }
  const std::vector<State>& states() const { return states_; }
  const std::vector<bool>& dropped() const { return dropped_; }
  const std::vector<Scatterer>& clutter() const { return clutter_; }
  const RadarParams& params() const { return params_; }

  double timestamp(std::size_t frame) const { return static_cast<double>(frame) / params_.frame_rate; }
  std::uint64_t frame_seed(std::size_t frame) const { return derive_seed(scene_seed_, 1000 + frame); }

  Scene scene(std::size_t frame) const;
  RdaMap rda(std::size_t frame) const;
  FramePair frame(std::size_t frame) const;

 private:
  RadarParams params_;
  SceneConfig config_;
  std::uint64_t scene_seed_;
  std::vector<State> states_;
  std::vector<bool> dropped_;
  std::vector<Scatterer> clutter_;
};

}  // namespace radartrack::radar_sim
