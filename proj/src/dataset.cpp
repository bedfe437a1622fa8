#include "radartrack/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace radartrack::dataset {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace radar_sim;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw std::runtime_error("truncated episode record");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  } else {
    for (float f : v) put_le(out, f);
  }
}

void get_floats(std::istream& in, float* dst, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("truncated episode record");
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] = get_le<float>(in);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

json rect_to_json(const Rect& r) {
  return {{"x_min", r.x_min}, {"x_max", r.x_max}, {"y_min", r.y_min}, {"y_max", r.y_max}};
}

Rect rect_from_json(const json& j) {
  Rect r;
  maybe(j, "x_min", r.x_min);
  maybe(j, "x_max", r.x_max);
  maybe(j, "y_min", r.y_min);
  maybe(j, "y_max", r.y_max);
  return r;
}

std::string episode_file_name(std::size_t index) {
  std::ostringstream name;
  name << "episode_" << std::setw(4) << std::setfill('0') << index << ".bin";
  return name.str();
}

}  // namespace

// ---------------------------------------------------------------- JSON

json to_json(const RadarParams& p) {
  return {{"f0", p.f0},
          {"f1", p.f1},
          {"chirp_duration", p.chirp_duration},
          {"chirp_period", p.chirp_period},
          {"chirps_per_frame", p.chirps_per_frame},
          {"fast_time_samples", p.fast_time_samples},
          {"rx_antennas", p.rx_antennas},
          {"antenna_spacing", p.spacing()},
          {"frame_rate", p.frame_rate},
          {"range_bins_kept", p.range_bins_kept},
          {"doppler_bins", p.doppler_bins},
          {"azimuth_bins", p.azimuth_bins}};
}

RadarParams radar_params_from_json(const json& j) {
  RadarParams p;
  maybe(j, "f0", p.f0);
  maybe(j, "f1", p.f1);
  maybe(j, "chirp_duration", p.chirp_duration);
  maybe(j, "chirp_period", p.chirp_period);
  maybe(j, "chirps_per_frame", p.chirps_per_frame);
  maybe(j, "fast_time_samples", p.fast_time_samples);
  maybe(j, "rx_antennas", p.rx_antennas);
  maybe(j, "antenna_spacing", p.antenna_spacing);
  maybe(j, "frame_rate", p.frame_rate);
  maybe(j, "range_bins_kept", p.range_bins_kept);
  maybe(j, "doppler_bins", p.doppler_bins);
  maybe(j, "azimuth_bins", p.azimuth_bins);
  p.validate();
  return p;
}

json to_json(const SceneConfig& c) {
  const auto& m = c.target_model;
  return {{"target_rcs", c.target_rcs},
          {"target_model",
           {{"scatterers", m.scatterers},
            {"body_radius", m.body_radius},
            {"extent_sigma", m.extent_sigma},
            {"doppler_sigma", m.doppler_sigma},
            {"rcs_sigma", m.rcs_sigma}}},
          {"clutter_count", c.clutter_count},
          {"clutter_rcs_min", c.clutter_rcs_min},
          {"clutter_rcs_max", c.clutter_rcs_max},
          {"clutter_max_range", c.clutter_max_range},
          {"clutter_max_azimuth", c.clutter_max_azimuth},
          {"clutter_margin", c.clutter_margin},
          {"noise_floor", c.noise_floor},
          {"peak",
           {{"range_sigma", c.peak.range_sigma},
            {"doppler_sigma", c.peak.doppler_sigma},
            {"azimuth_sigma", c.peak.azimuth_sigma}}},
          {"dropout_probability", c.dropout_probability},
          {"dropout_mean_burst", c.dropout_mean_burst}};
}

SceneConfig scene_config_from_json(const json& j) {
  SceneConfig c;
  maybe(j, "target_rcs", c.target_rcs);
  if (j.contains("target_model")) {
    const auto& m = j.at("target_model");
    maybe(m, "scatterers", c.target_model.scatterers);
    maybe(m, "body_radius", c.target_model.body_radius);
    maybe(m, "extent_sigma", c.target_model.extent_sigma);
    maybe(m, "doppler_sigma", c.target_model.doppler_sigma);
    maybe(m, "rcs_sigma", c.target_model.rcs_sigma);
  }
  maybe(j, "clutter_count", c.clutter_count);
  maybe(j, "clutter_rcs_min", c.clutter_rcs_min);
  maybe(j, "clutter_rcs_max", c.clutter_rcs_max);
  maybe(j, "clutter_max_range", c.clutter_max_range);
  maybe(j, "clutter_max_azimuth", c.clutter_max_azimuth);
  maybe(j, "clutter_margin", c.clutter_margin);
  maybe(j, "noise_floor", c.noise_floor);
  if (j.contains("peak")) {
    const auto& p = j.at("peak");
    maybe(p, "range_sigma", c.peak.range_sigma);
    maybe(p, "doppler_sigma", c.peak.doppler_sigma);
    maybe(p, "azimuth_sigma", c.peak.azimuth_sigma);
  }
  maybe(j, "dropout_probability", c.dropout_probability);
  maybe(j, "dropout_mean_burst", c.dropout_mean_burst);
  c.validate();
  return c;
}

json to_json(const TrajectorySpec& t) {
  return {{"seed", t.seed},
          {"area", rect_to_json(t.area)},
          {"motion", to_string(t.kind)},
          {"max_speed", t.max_speed},
          {"duration", t.duration},
          {"start", t.start},
          {"velocity", t.velocity}};
}

TrajectorySpec trajectory_from_json(const json& j) {
  TrajectorySpec t;
  maybe(j, "seed", t.seed);
  if (j.contains("area")) t.area = rect_from_json(j.at("area"));
  if (j.contains("motion")) t.kind = motion_kind_from_string(j.at("motion").get<std::string>());
  maybe(j, "max_speed", t.max_speed);
  maybe(j, "duration", t.duration);
  maybe(j, "start", t.start);
  maybe(j, "velocity", t.velocity);
  return t;
}

json to_json(const SimulationConfig& c) {
  json groups = json::array();
  for (const auto& g : c.groups) {
    groups.push_back({{"split", g.split},
                      {"motion", to_string(g.motion)},
                      {"episodes", g.episodes},
                      {"duration", g.duration}});
  }
  return {{"seed", c.seed},
          {"radar", to_json(c.radar)},
          {"scene", to_json(c.scene)},
          {"area", rect_to_json(c.area)},
          {"max_speed", c.max_speed},
          {"groups", groups}};
}

SimulationConfig simulation_config_from_json(const json& j) {
  try {
    SimulationConfig c;
    maybe(j, "seed", c.seed);
    if (j.contains("radar")) c.radar = radar_params_from_json(j.at("radar"));
    if (j.contains("scene")) c.scene = scene_config_from_json(j.at("scene"));
    if (j.contains("area")) c.area = rect_from_json(j.at("area"));
    maybe(j, "max_speed", c.max_speed);
    for (const auto& g : j.at("groups")) {
      EpisodeGroup group;
      maybe(g, "split", group.split);
      if (g.contains("motion")) group.motion = motion_kind_from_string(g.at("motion").get<std::string>());
      maybe(g, "episodes", group.episodes);
      maybe(g, "duration", group.duration);
      c.groups.push_back(group);
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidSpec(std::string("simulation config: ") + e.what());
  }
}

void SimulationConfig::validate() const {
  radar.validate();
  scene.validate();
  if (!(area.width() > 0.0) || !(area.height() > 0.0)) throw InvalidSpec("area must be non-empty");
  if (!(max_speed > 0.0)) throw InvalidSpec("max_speed must be positive");
  if (groups.empty()) throw InvalidSpec("simulation config has no episode groups");
  for (const auto& g : groups) {
    if (g.split != "train" && g.split != "test") throw InvalidSpec("split must be train or test");
    if (g.episodes < 1) throw InvalidSpec("episode count must be positive");
    if (!(g.duration > 0.0)) throw InvalidSpec("episode duration must be positive");
  }
}

json to_json(const DatasetMeta& m) {
  json episodes = json::array();
  std::size_t train = 0, test = 0, frames = 0;
  for (const auto& e : m.episodes) {
    episodes.push_back({{"file", e.file},
                        {"split", e.split},
                        {"frames", e.frames},
                        {"scene_seed", e.scene_seed},
                        {"trajectory", to_json(e.trajectory)}});
    (e.split == "train" ? train : test) += 1;
    frames += e.frames;
  }
  return {{"format", "RDTK"},
          {"version", kFormatVersion},
          {"seed", m.seed},
          {"config_hash", m.config_hash},
          {"radar", to_json(m.radar)},
          {"scene", to_json(m.scene)},
          {"counts", {{"episodes", m.episodes.size()}, {"train", train}, {"test", test}, {"frames", frames}}},
          {"episodes", episodes}};
}

DatasetMeta dataset_meta_from_json(const json& j) {
  try {
    DatasetMeta m;
    if (j.at("format").get<std::string>() != "RDTK") throw InvalidSpec("not an RDTK dataset");
    maybe(j, "seed", m.seed);
    maybe(j, "config_hash", m.config_hash);
    m.radar = radar_params_from_json(j.at("radar"));
    m.scene = scene_config_from_json(j.at("scene"));
    for (const auto& e : j.at("episodes")) {
      EpisodeInfo info;
      info.file = e.at("file").get<std::string>();
      info.split = e.at("split").get<std::string>();
      info.frames = e.at("frames").get<std::size_t>();
      info.scene_seed = e.at("scene_seed").get<std::uint64_t>();
      info.trajectory = trajectory_from_json(e.at("trajectory"));
      m.episodes.push_back(info);
    }
    return m;
  } catch (const json::exception& e) {
    throw InvalidSpec(std::string("dataset meta: ") + e.what());
  }
}

std::vector<std::size_t> DatasetMeta::episodes_in_split(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (episodes[i].split == split) out.push_back(i);
  }
  return out;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidSpec(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- records

EpisodeWriter::EpisodeWriter(const fs::path& path, std::uint32_t frames)
    : out_(path, std::ios::binary), path_(path), expected_(frames) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_.write(kMagic, 4);
  put_le<std::uint32_t>(out_, kFormatVersion);
  put_le<std::uint32_t>(out_, frames);
}

EpisodeWriter::~EpisodeWriter() {
  if (out_.is_open()) out_.close();
}

void EpisodeWriter::write_frame(double timestamp, const State& truth, const std::vector<float>& rd,
                                const std::vector<float>& ra) {
  if (written_ >= expected_) throw std::runtime_error("episode record overflow: " + path_.string());
  put_le<double>(out_, timestamp);
  for (double v : truth) put_le<float>(out_, static_cast<float>(v));
  put_floats(out_, rd);
  put_floats(out_, ra);
  ++written_;
}

void EpisodeWriter::close() {
  if (written_ != expected_) throw std::runtime_error("episode record incomplete: " + path_.string());
  out_.close();
  if (!out_) throw std::runtime_error("failed writing " + path_.string());
}

EpisodeData read_episode(const fs::path& path, std::size_t rd_size, std::size_t ra_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("bad magic in " + path.string());
  const auto version = get_le<std::uint32_t>(in);
  if (version != kFormatVersion) throw std::runtime_error("unsupported record version");
  const auto frames = get_le<std::uint32_t>(in);

  EpisodeData data;
  data.rd_size = rd_size;
  data.ra_size = ra_size;
  data.timestamps.resize(frames);
  data.truth.resize(frames);
  data.rd.resize(frames * rd_size);
  data.ra.resize(frames * ra_size);
  for (std::uint32_t f = 0; f < frames; ++f) {
    data.timestamps[f] = get_le<double>(in);
    for (auto& v : data.truth[f]) v = get_le<float>(in);
    get_floats(in, data.rd.data() + f * rd_size, rd_size);
    get_floats(in, data.ra.data() + f * ra_size, ra_size);
  }
  return data;
}

// ---------------------------------------------------------------- simulation

DatasetMeta plan_dataset(const SimulationConfig& config) {
  config.validate();
  DatasetMeta meta;
  meta.seed = config.seed;
  meta.radar = config.radar;
  meta.scene = config.scene;
  Fnv1a h;
  h.update(to_json(config).dump());
  meta.config_hash = h.hex();

  std::size_t index = 0;
  for (const auto& g : config.groups) {
    for (int e = 0; e < g.episodes; ++e, ++index) {
      EpisodeInfo info;
      info.file = episode_file_name(index);
      info.split = g.split;
      info.trajectory.seed = derive_seed(config.seed, 2 * index);
      info.trajectory.area = config.area;
      info.trajectory.kind = g.motion;
      info.trajectory.max_speed = config.max_speed;
      info.trajectory.duration = g.duration;
      info.scene_seed = derive_seed(config.seed, 2 * index + 1);
      info.frames = frame_count(g.duration, config.radar.frame_rate);
      meta.episodes.push_back(info);
    }
  }
  return meta;
}

EpisodeSimulator make_simulator(const DatasetMeta& meta, std::size_t episode) {
  const auto& info = meta.episodes.at(episode);
  return EpisodeSimulator(meta.radar, meta.scene, info.trajectory, info.scene_seed);
}

DatasetMeta simulate_dataset(const SimulationConfig& config, const fs::path& out_dir) {
  DatasetMeta meta = plan_dataset(config);
  fs::create_directories(out_dir);
  for (std::size_t e = 0; e < meta.episodes.size(); ++e) {
    const EpisodeSimulator sim = make_simulator(meta, e);
    EpisodeWriter writer(out_dir / meta.episodes[e].file, static_cast<std::uint32_t>(sim.frame_count()));
    for (std::size_t f = 0; f < sim.frame_count(); ++f) {
      const FramePair frame = sim.frame(f);
      writer.write_frame(frame.timestamp, sim.states()[f], frame.rd, frame.ra);
    }
    writer.close();
  }
  write_json_file(out_dir / "meta.json", to_json(meta));
  return meta;
}

DatasetMeta load_meta(const fs::path& dir) { return dataset_meta_from_json(read_json_file(dir / "meta.json")); }

EpisodeData load_episode(const fs::path& dir, const DatasetMeta& meta, std::size_t episode) {
  return read_episode(dir / meta.episodes.at(episode).file, meta.image_size_rd(), meta.image_size_ra());
}

std::string dataset_hash(const fs::path& dir) {
  const DatasetMeta meta = load_meta(dir);
  Fnv1a h;
  {
    std::ifstream in(dir / "meta.json", std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    h.update(ss.str());
  }
  std::vector<char> buffer(1 << 20);
  for (const auto& e : meta.episodes) {
    std::ifstream in(dir / e.file, std::ios::binary);
    if (!in) throw std::runtime_error("missing episode record " + e.file);
    while (in) {
      in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
      h.update(buffer.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  return h.hex();
}

}  // namespace radartrack::dataset
