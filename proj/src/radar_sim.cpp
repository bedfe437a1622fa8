#include "radartrack/radar_sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace radartrack::radar_sim {

namespace {

constexpr int kSubsteps = 10;

double wrap_centered(double value, double period) {
  double w = std::fmod(value + 0.5 * period, period);
  if (w < 0.0) w += period;
  return w - 0.5 * period;
}

// Gaussian weights along a periodic axis of `bins` entries whose kept bin j
// sits at offset (j - offset0) on an axis of period `period`.
std::vector<double> periodic_profile(int bins, double center, double sigma, double period) {
  std::vector<double> w(static_cast<std::size_t>(bins), 0.0);
  for (int j = 0; j < bins; ++j) {
    const double d = wrap_centered(j - center, period);
    if (std::abs(d) <= 4.0 * sigma) w[static_cast<std::size_t>(j)] = std::exp(-0.5 * d * d / (sigma * sigma));
  }
  return w;
}

void add_peak(RdaMap& map, const Scatterer& s, const RadarParams& params, const PeakShape& shape) {
  const PolarView view = polar_view(s);
  if (view.range < 1e-3 || s.reflectivity <= 0.0) return;
  const double r = std::max(view.range, 0.1);
  const double amplitude = s.reflectivity / (r * r * r * r);
  const BinPosition pos = bin_position(view, params);

  const int r_lo = std::max(0, static_cast<int>(std::floor(pos.range - 4.0 * shape.range_sigma)));
  const int r_hi = std::min(map.range_bins() - 1,
                            static_cast<int>(std::ceil(pos.range + 4.0 * shape.range_sigma)));
  if (r_lo > r_hi) return;

  // Doppler axis is the kept window of a chirps_per_frame-periodic spectrum.
  const auto doppler_w = periodic_profile(map.doppler_bins(), pos.doppler, shape.doppler_sigma,
                                          static_cast<double>(params.chirps_per_frame));
  const auto azimuth_w = periodic_profile(map.azimuth_bins(), pos.azimuth, shape.azimuth_sigma,
                                          static_cast<double>(map.azimuth_bins()));
  for (int i = r_lo; i <= r_hi; ++i) {
    const double dr = i - pos.range;
    const double gr = amplitude * std::exp(-0.5 * dr * dr / (shape.range_sigma * shape.range_sigma));
    for (int j = 0; j < map.doppler_bins(); ++j) {
      const double grd = gr * doppler_w[static_cast<std::size_t>(j)];
      if (grd == 0.0) continue;
      float* row = &map.at(i, j, 0);
      for (int k = 0; k < map.azimuth_bins(); ++k) {
        row[k] += static_cast<float>(grd * azimuth_w[static_cast<std::size_t>(k)]);
      }
    }
  }
}

void reflect_into(double& p, double& v, double lo, double hi) {
  for (int guard = 0; guard < 4 && (p < lo || p > hi); ++guard) {
    if (p > hi) {
      p = 2.0 * hi - p;
      v = -v;
    } else if (p < lo) {
      p = 2.0 * lo - p;
      v = -v;
    }
  }
  p = std::clamp(p, lo, hi);
}

void validate_trajectory_spec(const TrajectorySpec& spec) {
  if (!(spec.duration > 0.0)) throw InvalidSpec("trajectory duration must be positive");
  if (!(spec.area.width() > 0.0) || !(spec.area.height() > 0.0)) {
    throw InvalidSpec("trajectory area must be non-empty");
  }
  if (!(spec.max_speed > 0.0)) throw InvalidSpec("max_speed must be positive");
  if (spec.kind == MotionKind::constant_velocity) {
    if (!spec.area.contains(spec.start[0], spec.start[1])) {
      throw InvalidSpec("constant_velocity start lies outside the area");
    }
    if (std::hypot(spec.velocity[0], spec.velocity[1]) > spec.max_speed + 1e-12) {
      throw InvalidSpec("constant_velocity speed exceeds max_speed");
    }
  }
}

std::vector<State> constant_velocity_path(const TrajectorySpec& spec, std::size_t n, double frame_dt) {
  std::vector<State> out;
  out.reserve(n);
  double x = spec.start[0], y = spec.start[1];
  double vx = spec.velocity[0], vy = spec.velocity[1];
  const double dt = frame_dt / kSubsteps;
  for (std::size_t f = 0; f < n; ++f) {
    out.push_back({x, y, vx, vy});
    for (int s = 0; s < kSubsteps; ++s) {
      x += vx * dt;
      y += vy * dt;
      reflect_into(x, vx, spec.area.x_min, spec.area.x_max);
      reflect_into(y, vy, spec.area.y_min, spec.area.y_max);
    }
  }
  return out;
}

// Waypoint following with bounded acceleration, braking on arrival and
// occasional pauses.
std::vector<State> random_waypoint_path(const TrajectorySpec& spec, std::size_t n, double frame_dt) {
  constexpr double kMaxAccel = 1.2;  // m/s^2
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> ux(spec.area.x_min, spec.area.x_max);
  std::uniform_real_distribution<double> uy(spec.area.y_min, spec.area.y_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double x = ux(rng), y = uy(rng), vx = 0.0, vy = 0.0;
  double wx = ux(rng), wy = uy(rng);
  double cruise = spec.max_speed * (0.45 + 0.55 * unit(rng));
  double pause = 0.0;

  const double dt = frame_dt / kSubsteps;
  std::vector<State> out;
  out.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    out.push_back({x, y, vx, vy});
    for (int s = 0; s < kSubsteps; ++s) {
      double dx = wx - x, dy = wy - y;
      double dist = std::hypot(dx, dy);
      if (dist < 0.05) {
        wx = ux(rng);
        wy = uy(rng);
        cruise = spec.max_speed * (0.45 + 0.55 * unit(rng));
        if (unit(rng) < 0.25) pause = 0.3 + 1.2 * unit(rng);
        dx = wx - x;
        dy = wy - y;
        dist = std::hypot(dx, dy);
      }
      double dvx = -vx, dvy = -vy;
      if (pause > 0.0) {
        pause -= dt;
      } else if (dist > 0.0) {
        const double speed = std::min(cruise, 0.9 * std::sqrt(2.0 * kMaxAccel * dist));
        dvx = dx / dist * speed - vx;
        dvy = dy / dist * speed - vy;
      }
      const double dv = std::hypot(dvx, dvy);
      const double dv_max = kMaxAccel * dt;
      if (dv > dv_max) {
        dvx *= dv_max / dv;
        dvy *= dv_max / dv;
      }
      vx += dvx;
      vy += dvy;
      const double sp = std::hypot(vx, vy);
      if (sp > spec.max_speed) {
        vx *= spec.max_speed / sp;
        vy *= spec.max_speed / sp;
      }
      const double nx = std::clamp(x + vx * dt, spec.area.x_min, spec.area.x_max);
      const double ny = std::clamp(y + vy * dt, spec.area.y_min, spec.area.y_max);
      vx = (nx - x) / dt;
      vy = (ny - y) / dt;
      x = nx;
      y = ny;
    }
  }
  return out;
}

// Lissajous weave around the area center; speed bounded analytically.
std::vector<State> weave_path(const TrajectorySpec& spec, std::size_t n, double frame_dt) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cx = 0.5 * (spec.area.x_min + spec.area.x_max);
  const double cy = 0.5 * (spec.area.y_min + spec.area.y_max);
  const double ax = 0.5 * spec.area.width() * (0.6 + 0.35 * unit(rng));
  const double ay = 0.5 * spec.area.height() * (0.5 + 0.45 * unit(rng));
  const double ratio = 2.0 + 1.5 * unit(rng);
  const double peak_speed = spec.max_speed * (0.7 + 0.3 * unit(rng));
  const double wx = peak_speed / std::hypot(ax, ratio * ay);
  const double wy = ratio * wx;
  const double px = 2.0 * kPi * unit(rng);
  const double py = 2.0 * kPi * unit(rng);

  std::vector<State> out;
  out.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    const double t = static_cast<double>(f) * frame_dt;
    out.push_back({cx + ax * std::sin(wx * t + px), cy + ay * std::sin(wy * t + py),
                   ax * wx * std::cos(wx * t + px), ay * wy * std::cos(wy * t + py)});
  }
  return out;
}

}  // namespace

void RadarParams::validate() const {
  if (!(bandwidth() > 0.0)) throw InvalidSpec("radar bandwidth must be positive");
  if (!(chirp_duration > 0.0) || chirp_duration > chirp_period) {
    throw InvalidSpec("chirp duration must be positive and not exceed the chirp period");
  }
  if (chirps_per_frame <= 0 || fast_time_samples <= 0 || rx_antennas <= 0) {
    throw InvalidSpec("sample counts must be positive");
  }
  if (range_bins_kept <= 0 || range_bins_kept > fast_time_samples) {
    throw InvalidSpec("range_bins_kept must lie in [1, fast_time_samples]");
  }
  if (doppler_bins <= 0 || doppler_bins > chirps_per_frame) {
    throw InvalidSpec("doppler_bins must lie in [1, chirps_per_frame]");
  }
  if (azimuth_bins < rx_antennas) throw InvalidSpec("azimuth_bins must be >= rx_antennas");
  if (!(frame_rate > 0.0) || frame_rate * chirps_per_frame * chirp_period > 1.0 + 1e-12) {
    throw InvalidSpec("frames do not fit in real time");
  }
}

void Scene::validate() const {
  if (!(noise_floor > 0.0)) throw InvalidSpec("noise_floor must be positive");
  if (target_rcs < 0.0) throw InvalidSpec("target reflectivity must be nonnegative");
  for (const auto& c : clutter_points) {
    if (c.reflectivity < 0.0) throw InvalidSpec("clutter reflectivity must be nonnegative");
  }
  if (target_model.scatterers < 1) throw InvalidSpec("target model needs at least one scatterer");
  if (peak.range_sigma <= 0.0 || peak.doppler_sigma <= 0.0 || peak.azimuth_sigma <= 0.0) {
    throw InvalidSpec("peak widths must be positive");
  }
}

const char* to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::constant_velocity: return "constant_velocity";
    case MotionKind::random_waypoint: return "random_waypoint";
    case MotionKind::sinusoidal_weave: return "sinusoidal_weave";
  }
  return "unknown";
}

MotionKind motion_kind_from_string(const std::string& name) {
  if (name == "constant_velocity") return MotionKind::constant_velocity;
  if (name == "random_waypoint") return MotionKind::random_waypoint;
  if (name == "sinusoidal_weave") return MotionKind::sinusoidal_weave;
  throw InvalidSpec("unknown motion kind: " + name);
}

std::size_t frame_count(double duration, double frame_rate) {
  if (!(duration > 0.0)) throw InvalidSpec("duration must be positive");
  // Durations are often quoted to a few significant digits (0.0667 s for one
  // frame at 15 fps); a 1% slack absorbs that rounding.
  const double frames = std::ceil(duration * frame_rate - 1e-2);
  return static_cast<std::size_t>(std::max(1.0, frames));
}

std::vector<State> generate_trajectory(const TrajectorySpec& spec, const RadarParams& params) {
  validate_trajectory_spec(spec);
  const std::size_t n = frame_count(spec.duration, params.frame_rate);
  const double frame_dt = params.frame_period();
  switch (spec.kind) {
    case MotionKind::constant_velocity: return constant_velocity_path(spec, n, frame_dt);
    case MotionKind::random_waypoint: return random_waypoint_path(spec, n, frame_dt);
    case MotionKind::sinusoidal_weave: return weave_path(spec, n, frame_dt);
  }
  throw InvalidSpec("unknown motion kind");
}

RdaMap::RdaMap(int range_bins, int doppler_bins, int azimuth_bins)
    : range_bins_(range_bins), doppler_bins_(doppler_bins), azimuth_bins_(azimuth_bins) {
  if (range_bins <= 0 || doppler_bins <= 0 || azimuth_bins <= 0) {
    throw ShapeError("RDA map dimensions must be positive");
  }
  power_.assign(static_cast<std::size_t>(range_bins) * doppler_bins * azimuth_bins, 0.0f);
}

PolarView polar_view(const Scatterer& s) {
  PolarView v;
  v.range = std::hypot(s.x, s.y);
  if (v.range > 0.0) {
    v.radial_velocity = (s.x * s.vx + s.y * s.vy) / v.range;
    v.sin_azimuth = s.x / v.range;
  }
  return v;
}

BinPosition bin_position(const PolarView& view, const RadarParams& params) {
  BinPosition b;
  b.range = view.range / params.range_resolution();
  const double offset = wrap_centered(view.radial_velocity / params.velocity_resolution(),
                                      static_cast<double>(params.chirps_per_frame));
  b.doppler = 0.5 * params.doppler_bins + offset;
  const double az = 0.5 * params.azimuth_bins +
                    params.azimuth_bins * params.spacing() * view.sin_azimuth / params.wavelength();
  b.azimuth = std::fmod(az, static_cast<double>(params.azimuth_bins));
  if (b.azimuth < 0.0) b.azimuth += params.azimuth_bins;
  return b;
}

double range_of_bin(double bin, const RadarParams& params) { return bin * params.range_resolution(); }

double velocity_of_bin(double bin, const RadarParams& params) {
  return (bin - 0.5 * params.doppler_bins) * params.velocity_resolution();
}

double sin_azimuth_of_bin(double bin, const RadarParams& params) {
  return (bin - 0.5 * params.azimuth_bins) * params.wavelength() /
         (params.azimuth_bins * params.spacing());
}

std::vector<Scatterer> target_scatterers(const Scene& scene, std::uint64_t seed) {
  std::vector<Scatterer> out;
  if (!scene.target_present || scene.target_rcs <= 0.0) return out;
  const TargetModel& m = scene.target_model;
  const auto& s = scene.target_state;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double rcs = scene.target_rcs;
  if (m.rcs_sigma > 0.0) rcs *= std::exp(m.rcs_sigma * gauss(rng) - 0.5 * m.rcs_sigma * m.rcs_sigma);

  const double r = std::hypot(s[0], s[1]);
  const double ux = r > 0.0 ? s[0] / r : 0.0;
  const double uy = r > 0.0 ? s[1] / r : 0.0;
  const double cx = s[0] - m.body_radius * ux;
  const double cy = s[1] - m.body_radius * uy;
  const int count = std::max(1, m.scatterers);
  for (int i = 0; i < count; ++i) {
    Scatterer sc;
    sc.x = cx + m.extent_sigma * gauss(rng);
    sc.y = cy + m.extent_sigma * gauss(rng);
    // Spread is applied along the line of sight so it shows up as Doppler.
    const double dv = m.doppler_sigma * gauss(rng);
    sc.vx = s[2] + dv * ux;
    sc.vy = s[3] + dv * uy;
    sc.reflectivity = rcs / count;
    out.push_back(sc);
  }
  return out;
}

RdaMap synthesize_rda(const Scene& scene, const RadarParams& params, std::uint64_t seed) {
  params.validate();
  scene.validate();
  RdaMap map(params.range_bins_kept, params.doppler_bins, params.azimuth_bins);

  std::mt19937 noise_rng(static_cast<std::uint32_t>(seed ^ (seed >> 32)));
  std::exponential_distribution<float> noise(static_cast<float>(1.0 / scene.noise_floor));
  for (float& v : map.power()) v = noise(noise_rng);

  for (const auto& s : target_scatterers(scene, derive_seed(seed, 1))) {
    add_peak(map, s, params, scene.peak);
  }
  for (const auto& c : scene.clutter_points) add_peak(map, c, params, scene.peak);
  return map;
}

RdaMap crop_range(const RdaMap& full_map, int keep) {
  if (keep <= 0 || full_map.range_bins() < keep) {
    throw ShapeError("crop_range: map has " + std::to_string(full_map.range_bins()) +
                     " range bins, need at least " + std::to_string(keep));
  }
  RdaMap out(keep, full_map.doppler_bins(), full_map.azimuth_bins());
  const auto src = full_map.power();
  std::copy_n(src.begin(), out.power().size(), out.power().begin());
  return out;
}

FramePair project_rda(const RdaMap& map, double timestamp) {
  FramePair f;
  f.range_bins = map.range_bins();
  f.doppler_bins = map.doppler_bins();
  f.azimuth_bins = map.azimuth_bins();
  f.timestamp = timestamp;
  const std::size_t R = static_cast<std::size_t>(f.range_bins);
  const std::size_t D = static_cast<std::size_t>(f.doppler_bins);
  const std::size_t A = static_cast<std::size_t>(f.azimuth_bins);
  std::vector<double> rd(R * D, 0.0), ra(R * A, 0.0);
  const auto p = map.power();
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      const float* row = &p[(i * D + j) * A];
      double acc = 0.0;
      for (std::size_t k = 0; k < A; ++k) {
        acc += row[k];
        ra[i * A + k] += row[k];
      }
      rd[i * D + j] = acc;
    }
  }
  auto normalize = [](const std::vector<double>& in) {
    const double mx = in.empty() ? 0.0 : *std::max_element(in.begin(), in.end());
    std::vector<float> out(in.size(), 0.0f);
    if (mx > 0.0) {
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(in[i] / mx);
    }
    return out;
  };
  f.rd = normalize(rd);
  f.ra = normalize(ra);
  return f;
}

Peak find_peak(const RdaMap& map) {
  Peak best;
  best.power = -1.0f;
  for (int i = 0; i < map.range_bins(); ++i) {
    for (int j = 0; j < map.doppler_bins(); ++j) {
      for (int k = 0; k < map.azimuth_bins(); ++k) {
        const float v = map.at(i, j, k);
        if (v > best.power) best = {i, j, k, v};
      }
    }
  }
  return best;
}

}  // namespace radartrack::radar_sim
