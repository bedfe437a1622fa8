#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "radartrack/episode.hpp"

namespace radartrack::dataset {

using radar_sim::RadarParams;
using radar_sim::SceneConfig;
using radar_sim::TrajectorySpec;

inline constexpr char kMagic[4] = {'R', 'D', 'T', 'K'};
inline constexpr std::uint32_t kFormatVersion = 1;

/// A group of episodes sharing a motion kind and duration.
struct EpisodeGroup {
  std::string split = "train";  // "train" or "test"
  radar_sim::MotionKind motion = radar_sim::MotionKind::random_waypoint;
  int episodes = 1;
  double duration = 30.0;
};

/// Input of `radartrack simulate`.
struct SimulationConfig {
  std::uint64_t seed = 1;
  RadarParams radar;
  SceneConfig scene;
  radar_sim::Rect area;
  double max_speed = 0.9;
  std::vector<EpisodeGroup> groups;

  void validate() const;
};

struct EpisodeInfo {
  std::string file;
  std::string split;
  TrajectorySpec trajectory;
  std::uint64_t scene_seed = 0;
  std::size_t frames = 0;
};

/// Contents of meta.json.
struct DatasetMeta {
  std::uint64_t seed = 0;
  RadarParams radar;
  SceneConfig scene;
  std::vector<EpisodeInfo> episodes;
  std::string config_hash;

  std::size_t image_size_rd() const {
    return static_cast<std::size_t>(radar.range_bins_kept) * radar.doppler_bins;
  }
  std::size_t image_size_ra() const {
    return static_cast<std::size_t>(radar.range_bins_kept) * radar.azimuth_bins;
  }
  std::vector<std::size_t> episodes_in_split(const std::string& split) const;
};

/// One decoded episode record; images are stored frame after frame.
struct EpisodeData {
  std::vector<double> timestamps;
  std::vector<State> truth;
  std::vector<float> rd;
  std::vector<float> ra;
  std::size_t rd_size = 0;
  std::size_t ra_size = 0;

  std::size_t frames() const { return timestamps.size(); }
  const float* rd_frame(std::size_t f) const { return rd.data() + f * rd_size; }
  const float* ra_frame(std::size_t f) const { return ra.data() + f * ra_size; }
};

// JSON mapping of the configuration types.
nlohmann::json to_json(const RadarParams& p);
RadarParams radar_params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrajectorySpec& t);
TrajectorySpec trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimulationConfig& c);
SimulationConfig simulation_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetMeta& m);
DatasetMeta dataset_meta_from_json(const nlohmann::json& j);

/// Reads a JSON file; parse failures surface as InvalidSpec.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `j` with a fixed indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Episode record I/O: little-endian "RDTK", u32 version, u32 frame count,
/// then per frame f64 timestamp, f32 state[4], f32 rd[...], f32 ra[...].
class EpisodeWriter {
 public:
  EpisodeWriter(const std::filesystem::path& path, std::uint32_t frames);
  EpisodeWriter(const EpisodeWriter&) = delete;
  EpisodeWriter& operator=(const EpisodeWriter&) = delete;
  ~EpisodeWriter();
  void write_frame(double timestamp, const State& truth, const std::vector<float>& rd,
                   const std::vector<float>& ra);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::uint32_t expected_ = 0;
  std::uint32_t written_ = 0;
};

EpisodeData read_episode(const std::filesystem::path& path, std::size_t rd_size, std::size_t ra_size);

/// Builds the per-episode simulators implied by a configuration.
DatasetMeta plan_dataset(const SimulationConfig& config);
radar_sim::EpisodeSimulator make_simulator(const DatasetMeta& meta, std::size_t episode);

/// Simulates every episode and writes meta.json plus the episode records.
DatasetMeta simulate_dataset(const SimulationConfig& config, const std::filesystem::path& out_dir);

DatasetMeta load_meta(const std::filesystem::path& dir);
EpisodeData load_episode(const std::filesystem::path& dir, const DatasetMeta& meta, std::size_t episode);

/// Fingerprint over meta.json and every episode record.
std::string dataset_hash(const std::filesystem::path& dir);

}  // namespace radartrack::dataset
