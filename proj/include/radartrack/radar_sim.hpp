#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "radartrack/common.hpp"

namespace radartrack::radar_sim {

/// FMCW waveform and array constants of the simulated MIMO radar.
struct RadarParams {
  double f0 = 77e9;               // Hz
  double f1 = 81e9;               // Hz
  double chirp_duration = 180e-6; // s
  double chirp_period = 250e-6;   // s
  int chirps_per_frame = 256;
  int fast_time_samples = 1024;
  int rx_antennas = 16;
  /// Element spacing in meters; 0 selects lambda/2 at f0.
  double antenna_spacing = 0.0;
  double frame_rate = 15.0;  // Hz
  int range_bins_kept = 134;
  int doppler_bins = 64;
  int azimuth_bins = 64;

  double bandwidth() const { return f1 - f0; }
  double wavelength() const { return kSpeedOfLight / f0; }
  double spacing() const {
    return antenna_spacing > 0.0 ? antenna_spacing : 0.5 * wavelength();
  }
  /// c / (2B)
  double range_resolution() const { return kSpeedOfLight / (2.0 * bandwidth()); }
  /// lambda / (2 P T_rep)
  double velocity_resolution() const {
    return wavelength() / (2.0 * chirps_per_frame * chirp_period);
  }
  double frame_period() const { return 1.0 / frame_rate; }

  /// Throws InvalidSpec when the waveform constants are inconsistent.
  void validate() const;
};

/// Axis-aligned rectangle in the radar frame (meters).
struct Rect {
  double x_min = -2.0;
  double x_max = 2.0;
  double y_min = 1.0;
  double y_max = 3.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(double x, double y, double tol = 1e-9) const {
    return x >= x_min - tol && x <= x_max + tol && y >= y_min - tol && y <= y_max + tol;
  }
};

enum class MotionKind { constant_velocity, random_waypoint, sinusoidal_weave };

const char* to_string(MotionKind kind);
MotionKind motion_kind_from_string(const std::string& name);

struct TrajectorySpec {
  std::uint64_t seed = 0;
  Rect area;
  MotionKind kind = MotionKind::random_waypoint;
  double max_speed = 0.9;  // m/s
  double duration = 10.0;  // s
  // constant_velocity only; motion reflects off the area walls.
  std::array<double, 2> start{0.0, 2.0};
  std::array<double, 2> velocity{0.0, 0.0};
};

/// One state per frame period, starting at t = 0.
/// Velocities are the instantaneous velocities of the integrated path.
std::vector<State> generate_trajectory(const TrajectorySpec& spec, const RadarParams& params);

/// Number of frames covering `duration` seconds at `frame_rate`.
std::size_t frame_count(double duration, double frame_rate);

struct Scatterer {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double reflectivity = 0.0;
};

/// Extended-body reflection model of the tracked person. The default is an
/// ideal point target at the state position.
struct TargetModel {
  int scatterers = 1;
  double body_radius = 0.0;    // reflection centroid offset toward the radar, m
  double extent_sigma = 0.0;   // per-axis spread of scatterers around it, m
  double doppler_sigma = 0.0;  // radial-velocity spread of scatterers, m/s
  double rcs_sigma = 0.0;      // log-normal fluctuation of total reflectivity
};

/// Gaussian peak widths (standard deviation in bins) along each axis. The
/// defaults approximate the main lobes of the reference IF path: Hann-windowed
/// range and Doppler DFTs, and an unwindowed 16-element array zero-padded to
/// 64 azimuth bins.
struct PeakShape {
  double range_sigma = 0.6;
  double doppler_sigma = 0.6;
  double azimuth_sigma = 1.5;
};

struct Scene {
  State target_state{0.0, 2.0, 0.0, 0.0};
  bool target_present = true;
  double target_rcs = 300.0;
  TargetModel target_model;
  std::vector<Scatterer> clutter_points;
  double noise_floor = 0.05;  // mean linear noise power per bin
  PeakShape peak;

  void validate() const;
};

/// Range x Doppler x azimuth power map, row-major with azimuth fastest.
class RdaMap {
 public:
  RdaMap() = default;
  RdaMap(int range_bins, int doppler_bins, int azimuth_bins);

  int range_bins() const { return range_bins_; }
  int doppler_bins() const { return doppler_bins_; }
  int azimuth_bins() const { return azimuth_bins_; }

  std::size_t index(int r, int d, int a) const {
    return (static_cast<std::size_t>(r) * doppler_bins_ + d) * azimuth_bins_ + a;
  }
  float& at(int r, int d, int a) { return power_[index(r, d, a)]; }
  float at(int r, int d, int a) const { return power_[index(r, d, a)]; }

  std::span<float> power() { return power_; }
  std::span<const float> power() const { return power_; }

 private:
  int range_bins_ = 0;
  int doppler_bins_ = 0;
  int azimuth_bins_ = 0;
  std::vector<float> power_;
};

/// Range-Doppler and range-azimuth images, each scaled to [0, 1].
struct FramePair {
  int range_bins = 0;
  int doppler_bins = 0;
  int azimuth_bins = 0;
  std::vector<float> rd;  // range_bins x doppler_bins, row-major
  std::vector<float> ra;  // range_bins x azimuth_bins, row-major
  double timestamp = 0.0;
};

/// Scatterer geometry as seen by the radar.
struct PolarView {
  double range = 0.0;
  double radial_velocity = 0.0;  // positive when receding
  double sin_azimuth = 0.0;      // azimuth measured from boresight (+y) toward +x
};
PolarView polar_view(const Scatterer& s);

/// Continuous (fractional) bin coordinates of a scatterer in the kept map.
/// Doppler and azimuth are wrapped onto their periodic axes.
struct BinPosition {
  double range = 0.0;
  double doppler = 0.0;
  double azimuth = 0.0;
};
BinPosition bin_position(const PolarView& view, const RadarParams& params);

/// Physical value at the center of a kept bin.
double range_of_bin(double bin, const RadarParams& params);
double velocity_of_bin(double bin, const RadarParams& params);
double sin_azimuth_of_bin(double bin, const RadarParams& params);

/// Expands the target of `scene` into individual scatterers using `seed`
/// for the body model. Empty when the target is absent.
std::vector<Scatterer> target_scatterers(const Scene& scene, std::uint64_t seed);

/// Direct power-domain synthesis of the cropped RDA map. Each scatterer adds
/// a Gaussian peak of height reflectivity / r^4; every bin receives
/// exponentially distributed noise with mean `noise_floor`.
RdaMap synthesize_rda(const Scene& scene, const RadarParams& params, std::uint64_t seed);

/// Slow reference path: samples the IF beat signal for every antenna, chirp
/// and fast-time sample, applies the three DFTs (Hann-windowed in range and
/// Doppler, unwindowed across the array) and returns
/// the full fast-time_samples x doppler_bins x azimuth_bins power map.
/// Use crop_range() to compare against synthesize_rda().
RdaMap synthesize_rda_if(const Scene& scene, const RadarParams& params, std::uint64_t seed,
                         bool add_noise = true);

/// Keeps range bins [0, keep).
RdaMap crop_range(const RdaMap& full_map, int keep = 134);

/// Integrates along azimuth (RD) and Doppler (RA), then scales each image by
/// its own maximum. All-zero input yields all-zero images.
FramePair project_rda(const RdaMap& map, double timestamp = 0.0);

struct Peak {
  int range_bin = 0;
  int doppler_bin = 0;
  int azimuth_bin = 0;
  float power = 0.0f;
};
Peak find_peak(const RdaMap& map);

}  // namespace radartrack::radar_sim
