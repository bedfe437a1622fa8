// radartrack command-line front end.
//
//   radartrack simulate --config sim.json --out data/
//   radartrack ukf --data data/ --tune --out ukf_params.json
//   radartrack train --config train.json --data data/ --out ckpt/ [--loss ml|mse]
//   radartrack track --model ckpt/ --data data/ --mc 25 --out tracklog.csv
//   radartrack evaluate --logs a.csv b.csv --out report/
//   radartrack compare --data data/ --ml ckpt_ml/ --mse ckpt_mse/ --ukf ukf_params.json --out cmp/
//   radartrack compare --manifest cmp/manifest.json --out cmp2/
//
// Exit codes: 0 ok, 2 invalid configuration, 3 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "radartrack/baseline.hpp"
#include "radartrack/checkpoint.hpp"
#include "radartrack/dataset.hpp"
#include "radartrack/evaluation.hpp"
#include "radartrack/pipeline.hpp"
#include "radartrack/tracking.hpp"
#include "radartrack/training.hpp"

namespace fs = std::filesystem;
using namespace radartrack;
using nlohmann::json;

namespace {

void print_table(const std::vector<evaluation::MethodMetrics>& rows) {
  std::printf("%-22s %12s %12s %14s %12s %10s\n", "method", "RMSE [cm]", "LEO(0.2) [%]", "RMSE [cm/s]",
              "cal. MSE", "NLL");
  for (const auto& m : rows) {
    std::printf("%-22s %12.2f %12.2f %14.2f %12.5f %10.3f\n", m.method.c_str(), m.rmse_position_cm, m.leo_percent,
                m.rmse_velocity_cm_s, m.calibration_mse, m.nll);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar target tracking workbench: simulation, ML-CRNN training, UKF baseline, evaluation"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string config_path, data_dir, out_path, model_dir, params_path, grid_path, manifest_path, split = "test";
  std::string ml_dir, mse_dir, ukf_path, loss_name;
  std::vector<std::string> log_paths;
  int mc = 25, nll_from = 20, calibration_from = 0;
  bool tune = false, quiet = false;

  auto* sim = app.add_subcommand("simulate", "Synthesize an RD/RA dataset");
  sim->add_option("--config", config_path, "Simulation config JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out_path, "Output directory")->required();
  sim->add_option("--seed", seed, "Override the dataset seed");

  auto* train = app.add_subcommand("train", "Train an ML-CRNN (loss ml) or MSE-CRNN (loss mse)");
  train->add_option("--config", config_path, "Training config JSON")->check(CLI::ExistingFile);
  train->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out_path, "Checkpoint directory")->required();
  train->add_option("--loss", loss_name, "ml or mse")->check(CLI::IsMember({"ml", "mse"}));
  train->add_option("--seed", seed, "Override the training seed");
  train->add_flag("--quiet", quiet, "No per-epoch progress");

  auto* ukf = app.add_subcommand("ukf", "Tune or run the DBSCAN + UKF baseline");
  ukf->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* tune_flag = ukf->add_flag("--tune", tune, "Grid search on the training split and write parameters");
  ukf->add_option("--grid", grid_path, "Grid JSON (with --tune)")->check(CLI::ExistingFile);
  ukf->add_option("--params", params_path, "Tracker parameter JSON")->check(CLI::ExistingFile)->excludes(tune_flag);
  ukf->add_option("--split", split, "Episodes to track");
  ukf->add_option("--out", out_path, "Parameter JSON (--tune) or track log CSV")->required();
  ukf->add_option("--seed", seed, "Unused; accepted for uniformity");

  auto* track = app.add_subcommand("track", "Track with a trained network and MC dropout");
  track->add_option("--model", model_dir, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  track->add_option("--data", data_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  track->add_option("--mc", mc, "Monte-Carlo dropout samples (1 = deterministic)")->check(CLI::PositiveNumber);
  track->add_option("--split", split, "Episodes to track");
  track->add_option("--out", out_path, "Track log CSV")->required();
  track->add_option("--seed", seed, "Dropout seed");

  auto* evaluate = app.add_subcommand("evaluate", "Metrics and plot data from track logs");
  evaluate->add_option("--logs", log_paths, "Track log CSVs")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out_path, "Report directory")->required();
  evaluate->add_option("--nll-from", nll_from, "First frame of the NLL average");
  evaluate->add_option("--calibration-from", calibration_from, "First frame used for calibration");
  evaluate->add_option("--seed", seed, "Unused; accepted for uniformity");

  auto* compare = app.add_subcommand("compare", "UKF vs MSE-CRNN vs ML-CRNN on the same episodes");
  auto* manifest_opt = compare->add_option("--manifest", manifest_path, "Rerun from a compare manifest")
                           ->check(CLI::ExistingFile);
  compare->add_option("--data", data_dir, "Dataset directory")->excludes(manifest_opt);
  compare->add_option("--ml", ml_dir, "ML-CRNN checkpoint")->excludes(manifest_opt);
  compare->add_option("--mse", mse_dir, "MSE-CRNN checkpoint")->excludes(manifest_opt);
  compare->add_option("--ukf", ukf_path, "UKF parameter JSON")->excludes(manifest_opt);
  compare->add_option("--mc", mc, "Monte-Carlo dropout samples")->check(CLI::PositiveNumber);
  compare->add_option("--split", split, "Episodes to compare");
  compare->add_option("--nll-from", nll_from, "First frame of the NLL average");
  compare->add_option("--seed", seed, "Dropout seed");
  compare->add_option("--out", out_path, "Output directory")->required();

  auto* bench = app.add_subcommand("benchmark", "simulate, tune, train both networks and compare");
  bench->add_option("--config", config_path, "Benchmark config JSON")->required()->check(CLI::ExistingFile);
  bench->add_option("--out", out_path, "Work directory")->required();
  bench->add_option("--seed", seed, "Override the dataset seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) {
      auto config = dataset::simulation_config_from_json(dataset::read_json_file(config_path));
      if (seed) config.seed = *seed;
      const auto meta = dataset::simulate_dataset(config, out_path);
      std::printf("simulated %zu episodes into %s (hash %s)\n", meta.episodes.size(), out_path.c_str(),
                  dataset::dataset_hash(out_path).c_str());
    } else if (*train) {
      training::TrainConfig config;
      if (!config_path.empty()) config = training::train_config_from_json(dataset::read_json_file(config_path));
      if (!loss_name.empty()) config.loss = training::loss_from_string(loss_name);
      if (seed) config.seed = *seed;
      const auto result = pipeline::train_model(data_dir, config, out_path, !quiet);
      std::printf("trained %s model: best epoch %d of %d, checkpoint %s\n", training::to_string(config.loss),
                  result.best_epoch, result.epochs_run, out_path.c_str());
    } else if (*ukf) {
      if (tune) {
        baseline::TuningGrid grid;
        if (!grid_path.empty()) grid = baseline::tuning_grid_from_json(dataset::read_json_file(grid_path));
        const auto result = pipeline::tune_ukf(data_dir, grid, baseline::TrackerParams{}, out_path);
        std::printf("best UKF parameters written to %s\n%s\n", out_path.c_str(),
                    baseline::to_json(result.best).dump(2).c_str());
      } else {
        if (params_path.empty()) throw InvalidSpec("ukf: pass --tune or --params");
        const auto params = baseline::tracker_params_from_json(dataset::read_json_file(params_path));
        const auto meta = dataset::load_meta(data_dir);
        const auto log = tracking::track_ukf(params, meta, meta.episodes_in_split(split));
        evaluation::write_track_log(out_path, log);
        std::printf("UKF: %zu frames, position RMSE %.2f cm\n", log.rows.size(),
                    evaluation::rmse(log, evaluation::Component::position));
      }
    } else if (*track) {
      const auto ckpt = checkpoint::load(model_dir);
      const auto meta = dataset::load_meta(data_dir);
      tracking::TrackOptions options;
      options.mc_samples = mc;
      if (seed) options.seed = *seed;
      const std::string method = ckpt.info.loss == "mse" ? "MSE-CRNN" : "ML-CRNN";
      const auto logs = tracking::track_network(ckpt.model, data_dir, meta, meta.episodes_in_split(split), options,
                                                method);
      evaluation::write_track_log(out_path, logs.total);
      const fs::path out(out_path);
      const fs::path stem = out.parent_path() / out.stem();
      evaluation::write_track_log(stem.string() + "_aleatoric.csv", logs.aleatoric);
      evaluation::write_track_log(stem.string() + "_epistemic.csv", logs.epistemic);
      std::printf("%s: %zu frames, position RMSE %.2f cm\n", method.c_str(), logs.total.rows.size(),
                  evaluation::rmse(logs.total, evaluation::Component::position));
    } else if (*evaluate) {
      std::vector<evaluation::TrackLog> logs;
      for (const auto& p : log_paths) logs.push_back(evaluation::read_track_log(p));
      evaluation::ReportOptions options;
      options.nll_first_frame = nll_from;
      options.calibration_first_frame = calibration_from;
      print_table(evaluation::emit_report(logs, out_path, options));
    } else if (*compare) {
      pipeline::CompareResult result;
      if (!manifest_path.empty()) {
        result = pipeline::rerun_from_manifest(manifest_path, out_path);
      } else {
        if (data_dir.empty() || ml_dir.empty() || mse_dir.empty() || ukf_path.empty()) {
          throw InvalidSpec("compare: --data, --ml, --mse and --ukf are required without --manifest");
        }
        pipeline::CompareInputs in;
        in.data = data_dir;
        in.ml_checkpoint = ml_dir;
        in.mse_checkpoint = mse_dir;
        in.ukf_params = ukf_path;
        in.split = split;
        in.mc_samples = mc;
        in.nll_first_frame = nll_from;
        if (seed) in.seed = *seed;
        result = pipeline::compare(in, out_path);
      }
      print_table(result.table);
      std::printf("\nML-CRNN covariance components\n");
      print_table(result.components);
    } else if (*bench) {
      auto config = pipeline::benchmark_config_from_json(dataset::read_json_file(config_path));
      if (seed) config.simulation.seed = *seed;
      const auto r = pipeline::run_benchmark(config, out_path);
      print_table(r.compare.table);
      std::printf("\nML-CRNN covariance components\n");
      print_table(r.compare.components);
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const InvalidSpec& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
