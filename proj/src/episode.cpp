#include "radartrack/episode.hpp"

#include <cmath>
#include <random>

namespace radartrack::radar_sim {

void SceneConfig::validate() const {
  if (!(noise_floor > 0.0)) throw InvalidSpec("noise_floor must be positive");
  if (target_rcs < 0.0 || clutter_rcs_min < 0.0 || clutter_rcs_max < clutter_rcs_min) {
    throw InvalidSpec("reflectivities must be nonnegative and ordered");
  }
  if (clutter_count < 0) throw InvalidSpec("clutter_count must be nonnegative");
  if (dropout_probability < 0.0 || dropout_probability >= 1.0) {
    throw InvalidSpec("dropout_probability must lie in [0, 1)");
  }
  if (dropout_mean_burst < 1.0) throw InvalidSpec("dropout_mean_burst must be >= 1");
}

EpisodeSimulator::EpisodeSimulator(RadarParams params, SceneConfig config,
                                   TrajectorySpec trajectory, std::uint64_t scene_seed)
    : params_(params), config_(std::move(config)), scene_seed_(scene_seed) {
  params_.validate();
  config_.validate();
  states_ = generate_trajectory(trajectory, params_);

  std::mt19937_64 rng(derive_seed(scene_seed_, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Rect& area = trajectory.area;
  const double margin = config_.clutter_margin;
  for (int i = 0, attempts = 0; i < config_.clutter_count && attempts < 10000; ++attempts) {
    const double r = 0.5 + (config_.clutter_max_range - 0.5) * unit(rng);
    const double az = config_.clutter_max_azimuth * (2.0 * unit(rng) - 1.0);
    const double x = r * std::sin(az), y = r * std::cos(az);
    if (x > area.x_min - margin && x < area.x_max + margin && y > area.y_min - margin &&
        y < area.y_max + margin) {
      continue;
    }
    const double log_lo = std::log(std::max(config_.clutter_rcs_min, 1e-12));
    const double log_hi = std::log(std::max(config_.clutter_rcs_max, 1e-12));
    clutter_.push_back({x, y, 0.0, 0.0, std::exp(log_lo + (log_hi - log_lo) * unit(rng))});
    ++i;
  }

  // Two-state Markov chain with the requested stationary dropout fraction and
  // mean burst length.
  const double p = config_.dropout_probability;
  const double leave = 1.0 / config_.dropout_mean_burst;
  const double enter = p > 0.0 ? std::min(1.0, p * leave / (1.0 - p)) : 0.0;
  dropped_.assign(states_.size(), false);
  bool off = p > 0.0 && unit(rng) < p;
  for (std::size_t f = 0; f < states_.size(); ++f) {
    dropped_[f] = off;
    off = off ? unit(rng) >= leave : unit(rng) < enter;
  }
}

Scene EpisodeSimulator::scene(std::size_t frame) const {
  Scene s;
  s.target_state = states_.at(frame);
  s.target_present = !dropped_.at(frame);
  s.target_rcs = config_.target_rcs;
  s.target_model = config_.target_model;
  s.clutter_points = clutter_;
  s.noise_floor = config_.noise_floor;
  s.peak = config_.peak;
  return s;
}

RdaMap EpisodeSimulator::rda(std::size_t frame) const {
  return synthesize_rda(scene(frame), params_, frame_seed(frame));
}

FramePair EpisodeSimulator::frame(std::size_t frame) const {
  return project_rda(rda(frame), timestamp(frame));
}

}  // namespace radartrack::radar_sim
