#include "radartrack/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "radartrack/dataset.hpp"

namespace radartrack::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

nlohmann::json config_json(const mlcrnn::ModelConfig& c) {
  return {{"input_h", c.input_h},       {"rd_w", c.rd_w},
          {"ra_w", c.ra_w},             {"channels", c.channels},
          {"obs_dim", c.obs_dim},       {"hidden", c.hidden},
          {"fc_dropout", c.fc_dropout}, {"recurrent_dropout", c.recurrent_dropout}};
}

mlcrnn::ModelConfig config_from_json(const nlohmann::json& j) {
  mlcrnn::ModelConfig c;
  c.input_h = j.at("input_h").get<int>();
  c.rd_w = j.at("rd_w").get<int>();
  c.ra_w = j.at("ra_w").get<int>();
  c.channels = j.at("channels").get<std::array<int, 4>>();
  c.obs_dim = j.at("obs_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.fc_dropout = j.at("fc_dropout").get<double>();
  c.recurrent_dropout = j.at("recurrent_dropout").get<double>();
  return c;
}

}  // namespace

void save(const std::filesystem::path& dir, const mlcrnn::MlCrnnModel<float>& model,
          const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", model.parameter_names()[i]}, {"shape", params[i].shape}});
  }
  nlohmann::json meta = {
      {"format", "radartrack-checkpoint"},
      {"architecture_hash", model.config().architecture_hash()},
      {"architecture", model.config().describe()},
      {"config", config_json(model.config())},
      {"parameter_count", mlcrnn::count_parameters(model)},
      {"dtype", "f32le"},
      {"tensors", tensors},
      {"seed", info.seed},
      {"loss", info.loss},
      {"dataset_hash", info.dataset_hash},
      {"train_config_hash", info.train_config_hash},
      {"epochs", info.epochs},
  };
  dataset::write_json_file(dir / "meta.json", meta);

  std::ofstream out(dir / "params.bin", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
  for (const auto& p : params) {
    out.write(reinterpret_cast<const char*>(p.values.data()),
              static_cast<std::streamsize>(p.values.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("write failed: " + (dir / "params.bin").string());
}

Loaded load(const std::filesystem::path& dir) {
  const nlohmann::json meta = dataset::read_json_file(dir / "meta.json");
  Loaded out{mlcrnn::MlCrnnModel<float>(config_from_json(meta.at("config"))), {}};
  if (meta.at("architecture_hash").get<std::string>() != out.model.config().architecture_hash()) {
    throw InvalidSpec("checkpoint architecture hash does not match this build");
  }
  out.info.seed = meta.at("seed").get<std::uint64_t>();
  out.info.loss = meta.at("loss").get<std::string>();
  out.info.dataset_hash = meta.at("dataset_hash").get<std::string>();
  out.info.train_config_hash = meta.at("train_config_hash").get<std::string>();
  out.info.epochs = meta.at("epochs").get<int>();

  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw InvalidSpec("missing " + (dir / "params.bin").string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != mlcrnn::count_parameters(out.model) * sizeof(float)) {
    throw InvalidSpec("checkpoint blob size does not match the architecture");
  }
  std::size_t offset = 0;
  for (auto& p : out.model.parameters()) {
    std::memcpy(p.values.data(), blob.data() + offset, p.values.size() * sizeof(float));
    offset += p.values.size() * sizeof(float);
  }
  return out;
}

std::string weights_hash(const std::filesystem::path& dir) {
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw InvalidSpec("missing " + (dir / "params.bin").string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Fnv1a h;
  h.update(blob);
  return h.hex();
}

}  // namespace radartrack::checkpoint
