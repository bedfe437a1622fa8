#include "radartrack/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>

#include "radartrack/checkpoint.hpp"
#include "radartrack/tracking.hpp"

namespace radartrack::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<dataset::EpisodeData> load_split(const fs::path& data, const dataset::DatasetMeta& meta,
                                             const std::string& split) {
  std::vector<dataset::EpisodeData> out;
  for (std::size_t e : meta.episodes_in_split(split)) out.push_back(dataset::load_episode(data, meta, e));
  if (out.empty()) throw InvalidSpec("dataset has no '" + split + "' episodes");
  return out;
}

}  // namespace

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidSpec("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

json write_manifest(const fs::path& out_dir, const std::string& command, const json& inputs,
                    const std::vector<std::string>& outputs) {
  json files = json::object();
  for (const auto& name : outputs) files[name] = file_hash(out_dir / name);
  json manifest = {{"command", command}, {"code_version", kCodeVersion}, {"inputs", inputs}, {"outputs", files}};
  dataset::write_json_file(out_dir / "manifest.json", manifest);
  return manifest;
}

json to_json(const CompareInputs& c) {
  return {{"data", c.data.string()},
          {"ml_checkpoint", c.ml_checkpoint.string()},
          {"mse_checkpoint", c.mse_checkpoint.string()},
          {"ukf_params", c.ukf_params.string()},
          {"split", c.split},
          {"mc_samples", c.mc_samples},
          {"seed", c.seed},
          {"nll_first_frame", c.nll_first_frame}};
}

CompareInputs compare_inputs_from_json(const json& j) {
  CompareInputs c;
  if (j.contains("data")) c.data = j.at("data").get<std::string>();
  if (j.contains("ml_checkpoint")) c.ml_checkpoint = j.at("ml_checkpoint").get<std::string>();
  if (j.contains("mse_checkpoint")) c.mse_checkpoint = j.at("mse_checkpoint").get<std::string>();
  if (j.contains("ukf_params")) c.ukf_params = j.at("ukf_params").get<std::string>();
  maybe(j, "split", c.split);
  maybe(j, "mc_samples", c.mc_samples);
  maybe(j, "seed", c.seed);
  maybe(j, "nll_first_frame", c.nll_first_frame);
  return c;
}

CompareResult compare(const CompareInputs& in, const fs::path& out_dir) {
  // The epistemic-only covariance of a 4-D state has rank at most M - 1.
  if (in.mc_samples < 5) throw InvalidSpec("compare: mc_samples must be >= 5 for a full-rank epistemic covariance");
  const dataset::DatasetMeta meta = dataset::load_meta(in.data);
  const std::string data_hash = dataset::dataset_hash(in.data);
  const auto ml = checkpoint::load(in.ml_checkpoint);
  const auto mse = checkpoint::load(in.mse_checkpoint);
  const json ukf_json = dataset::read_json_file(in.ukf_params);
  const baseline::TrackerParams ukf_params = baseline::tracker_params_from_json(ukf_json);
  if (ml.info.dataset_hash != data_hash || mse.info.dataset_hash != data_hash ||
      (ukf_json.contains("dataset_hash") && ukf_json.at("dataset_hash").get<std::string>() != data_hash)) {
    throw InvalidSpec("compare: inputs were produced from a different dataset");
  }
  const auto episodes = meta.episodes_in_split(in.split);
  if (episodes.empty()) throw InvalidSpec("compare: dataset has no '" + in.split + "' episodes");

  tracking::TrackOptions options;
  options.mc_samples = in.mc_samples;
  options.seed = in.seed;
  const evaluation::TrackLog ukf_log = tracking::track_ukf(ukf_params, meta, episodes, "UKF");
  const auto mse_logs = tracking::track_network(mse.model, in.data, meta, episodes, options, "MSE-CRNN");
  const auto ml_logs = tracking::track_network(ml.model, in.data, meta, episodes, options, "ML-CRNN");

  fs::create_directories(out_dir);
  const std::vector<std::pair<std::string, const evaluation::TrackLog*>> logs = {
      {"ukf.csv", &ukf_log},
      {"mse_crnn.csv", &mse_logs.total},
      {"ml_crnn.csv", &ml_logs.total},
      {"ml_crnn_aleatoric.csv", &ml_logs.aleatoric},
      {"ml_crnn_epistemic.csv", &ml_logs.epistemic}};
  std::vector<std::string> outputs;
  for (const auto& [name, log] : logs) {
    evaluation::write_track_log(out_dir / name, *log);
    outputs.push_back(name);
  }

  evaluation::ReportOptions report;
  report.nll_first_frame = in.nll_first_frame;
  CompareResult result;
  const std::vector<evaluation::TrackLog> table_logs = {ukf_log, mse_logs.total, ml_logs.total};
  result.table = evaluation::emit_report(table_logs, out_dir / "report", report);
  const std::vector<evaluation::TrackLog> parts = {ml_logs.total, ml_logs.aleatoric, ml_logs.epistemic};
  result.components = evaluation::emit_report(parts, out_dir / "report_components", report);
  for (const char* dir : {"report", "report_components"}) {
    for (const char* f : {"metrics.csv", "nll_curve.csv", "calibration.csv", "velocity_uncertainty.csv"}) {
      outputs.push_back(std::string(dir) + "/" + f);
    }
  }

  json inputs = to_json(in);
  inputs["hashes"] = {{"dataset", data_hash},
                      {"ml_checkpoint", checkpoint::weights_hash(in.ml_checkpoint)},
                      {"mse_checkpoint", checkpoint::weights_hash(in.mse_checkpoint)},
                      {"ukf_params", file_hash(in.ukf_params)}};
  result.manifest = write_manifest(out_dir, "compare", inputs, outputs);
  return result;
}

CompareResult rerun_from_manifest(const fs::path& manifest_path, const fs::path& out_dir) {
  const json manifest = dataset::read_json_file(manifest_path);
  if (manifest.value("command", "") != "compare") throw InvalidSpec("manifest does not describe a compare run");
  const json& inputs = manifest.at("inputs");
  const CompareInputs in = compare_inputs_from_json(inputs);
  const json& h = inputs.at("hashes");
  if (h.at("dataset").get<std::string>() != dataset::dataset_hash(in.data) ||
      h.at("ml_checkpoint").get<std::string>() != checkpoint::weights_hash(in.ml_checkpoint) ||
      h.at("mse_checkpoint").get<std::string>() != checkpoint::weights_hash(in.mse_checkpoint) ||
      h.at("ukf_params").get<std::string>() != file_hash(in.ukf_params)) {
    throw InvalidSpec("manifest inputs changed since the recorded run");
  }
  return compare(in, out_dir);
}

baseline::TuningResult tune_ukf(const fs::path& data, const baseline::TuningGrid& grid,
                                const baseline::TrackerParams& base, const fs::path& out_file) {
  const dataset::DatasetMeta meta = dataset::load_meta(data);
  const auto episodes = meta.episodes_in_split("train");
  if (episodes.empty()) throw InvalidSpec("ukf tuning: dataset has no training episodes");
  baseline::TrackerParams b = base;
  b.area = meta.episodes.front().trajectory.area;
  const auto result = baseline::grid_search_tune(tracking::tuning_data(meta, episodes), grid, b);
  json j = baseline::to_json(result.best);
  j["dataset_hash"] = dataset::dataset_hash(data);
  j["grid"] = baseline::to_json(grid);
  for (const auto& e : result.entries) {
    if (e.params.q == result.best.q && e.params.sigma_range == result.best.sigma_range &&
        e.params.sigma_azimuth == result.best.sigma_azimuth &&
        e.params.detection.threshold_factor == result.best.detection.threshold_factor &&
        e.params.detection.eps == result.best.detection.eps && e.params.detection.min_pts == result.best.detection.min_pts) {
      j["train_rmse_position_cm"] = e.rmse_position_cm;
      j["train_rmse_velocity_cm_s"] = e.rmse_velocity_cm_s;
    }
  }
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  dataset::write_json_file(out_file, j);
  return result;
}

training::TrainResult train_model(const fs::path& data, const training::TrainConfig& config, const fs::path& out_dir,
                                  bool verbose) {
  const dataset::DatasetMeta meta = dataset::load_meta(data);
  const auto episodes = load_split(data, meta, "train");
  auto progress = [&](const training::EpochRecord& r) {
    if (!verbose) return;
    std::fprintf(stderr, "[%s] epoch %3d train %.4f val %.4f val_nll %.4f epistemic %.3g (%.1fs)\n",
                 training::to_string(config.loss), r.epoch, r.train_loss, r.validation_loss, r.validation_nll,
                 r.epistemic_trace, r.seconds);
  };
  training::TrainResult result = training::train(config, episodes, {}, progress);

  checkpoint::CheckpointInfo info;
  info.seed = config.seed;
  info.loss = training::to_string(config.loss);
  info.dataset_hash = dataset::dataset_hash(data);
  Fnv1a h;
  h.update(training::to_json(config).dump());
  info.train_config_hash = h.hex();
  info.epochs = result.epochs_run;
  checkpoint::save(out_dir, result.model, info);
  training::write_curve_csv(out_dir / "training_curve.csv", result.curve);
  json inputs = {{"data", data.string()},
                 {"dataset_hash", info.dataset_hash},
                 {"train_config", training::to_json(config)},
                 {"train_config_hash", info.train_config_hash},
                 {"best_epoch", result.best_epoch}};
  write_manifest(out_dir, "train", inputs, {"meta.json", "params.bin", "training_curve.csv"});
  return result;
}

json to_json(const BenchmarkConfig& c) {
  json cmp = to_json(c.compare);
  for (const char* k : {"data", "ml_checkpoint", "mse_checkpoint", "ukf_params"}) cmp.erase(k);
  return {{"simulation", dataset::to_json(c.simulation)},
          {"ml_train", training::to_json(c.ml_train)},
          {"mse_train", training::to_json(c.mse_train)},
          {"grid", baseline::to_json(c.grid)},
          {"ukf_base", baseline::to_json(c.ukf_base)},
          {"compare", cmp}};
}

BenchmarkConfig benchmark_config_from_json(const json& j) {
  BenchmarkConfig c;
  c.simulation = dataset::simulation_config_from_json(j.at("simulation"));
  if (j.contains("ml_train")) c.ml_train = training::train_config_from_json(j.at("ml_train"));
  c.mse_train = c.ml_train;
  c.mse_train.loss = training::Loss::mse;
  if (j.contains("mse_train")) c.mse_train = training::train_config_from_json(j.at("mse_train"));
  if (j.contains("grid")) c.grid = baseline::tuning_grid_from_json(j.at("grid"));
  if (j.contains("ukf_base")) c.ukf_base = baseline::tracker_params_from_json(j.at("ukf_base"));
  if (j.contains("compare")) c.compare = compare_inputs_from_json(j.at("compare"));
  return c;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config, const fs::path& work_dir) {
  BenchmarkResult r;
  auto log = [&](const std::string& msg) {
    if (config.verbose) std::fprintf(stderr, "%s\n", msg.c_str());
  };
  fs::create_directories(work_dir);
  const fs::path data = work_dir / "data";

  auto t0 = std::chrono::steady_clock::now();
  dataset::simulate_dataset(config.simulation, data);
  r.seconds_simulate = since(t0);
  log("simulate: " + std::to_string(r.seconds_simulate) + " s");

  t0 = std::chrono::steady_clock::now();
  const fs::path ukf_file = work_dir / "ukf_params.json";
  tune_ukf(data, config.grid, config.ukf_base, ukf_file);
  r.seconds_tune = since(t0);
  log("ukf grid search: " + std::to_string(r.seconds_tune) + " s");

  t0 = std::chrono::steady_clock::now();
  train_model(data, config.ml_train, work_dir / "ml_crnn", config.verbose);
  r.seconds_train_ml = since(t0);
  log("train ML-CRNN: " + std::to_string(r.seconds_train_ml) + " s");

  t0 = std::chrono::steady_clock::now();
  train_model(data, config.mse_train, work_dir / "mse_crnn", config.verbose);
  r.seconds_train_mse = since(t0);
  log("train MSE-CRNN: " + std::to_string(r.seconds_train_mse) + " s");

  t0 = std::chrono::steady_clock::now();
  CompareInputs in = config.compare;
  in.data = data;
  in.ml_checkpoint = work_dir / "ml_crnn";
  in.mse_checkpoint = work_dir / "mse_crnn";
  in.ukf_params = ukf_file;
  r.compare = compare(in, work_dir / "compare");
  r.seconds_compare = since(t0);
  log("compare: " + std::to_string(r.seconds_compare) + " s");
  return r;
}

}  // namespace radartrack::pipeline
