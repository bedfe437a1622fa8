#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "radartrack/baseline.hpp"
#include "radartrack/dataset.hpp"
#include "radartrack/evaluation.hpp"
#include "radartrack/training.hpp"

namespace radartrack::pipeline {

inline constexpr const char* kCodeVersion = "radartrack 1.0.0";

/// FNV-1a of a file's bytes.
std::string file_hash(const std::filesystem::path& path);

/// Writes out_dir/manifest.json: command, code version, inputs, and the hash
/// of every listed output file (paths relative to out_dir).
nlohmann::json write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                              const nlohmann::json& inputs, const std::vector<std::string>& outputs);

struct CompareInputs {
  std::filesystem::path data;
  std::filesystem::path ml_checkpoint;
  std::filesystem::path mse_checkpoint;
  std::filesystem::path ukf_params;
  std::string split = "test";
  int mc_samples = 25;
  std::uint64_t seed = 11;
  int nll_first_frame = 20;  // 2 T
};

nlohmann::json to_json(const CompareInputs& c);
CompareInputs compare_inputs_from_json(const nlohmann::json& j);

struct CompareResult {
  std::vector<evaluation::MethodMetrics> table;       // UKF, MSE-CRNN, ML-CRNN
  std::vector<evaluation::MethodMetrics> components;  // ML-CRNN total / aleatoric / epistemic
  nlohmann::json manifest;
};

/// Runs the UKF, the MSE-CRNN and the ML-CRNN on the same episodes and
/// writes their track logs, the metric tables and manifest.json into
/// out_dir. Refuses (InvalidSpec) when a checkpoint or the UKF parameters
/// were produced from a different dataset.
CompareResult compare(const CompareInputs& inputs, const std::filesystem::path& out_dir);

/// Re-executes a compare run from its manifest after checking that every
/// input still has the recorded hash.
CompareResult rerun_from_manifest(const std::filesystem::path& manifest, const std::filesystem::path& out_dir);

/// The whole desk-scale benchmark: simulate, tune the UKF, train both
/// networks, compare.
struct BenchmarkConfig {
  dataset::SimulationConfig simulation;
  training::TrainConfig ml_train;
  training::TrainConfig mse_train;
  baseline::TuningGrid grid;
  baseline::TrackerParams ukf_base;
  CompareInputs compare;  // paths are filled in by run_benchmark
  bool verbose = true;
};

nlohmann::json to_json(const BenchmarkConfig& c);
BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j);

struct BenchmarkResult {
  CompareResult compare;
  double seconds_simulate = 0.0;
  double seconds_tune = 0.0;
  double seconds_train_ml = 0.0;
  double seconds_train_mse = 0.0;
  double seconds_compare = 0.0;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& config, const std::filesystem::path& work_dir);

/// Steps behind the individual CLI commands.
baseline::TuningResult tune_ukf(const std::filesystem::path& data, const baseline::TuningGrid& grid,
                                const baseline::TrackerParams& base, const std::filesystem::path& out_file);
training::TrainResult train_model(const std::filesystem::path& data, const training::TrainConfig& config,
                                  const std::filesystem::path& out_dir, bool verbose);

}  // namespace radartrack::pipeline
