#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "radartrack/dataset.hpp"
#include "radartrack/mlcrnn.hpp"

namespace radartrack::training {

enum class Loss { ml, mse };
const char* to_string(Loss loss);
Loss loss_from_string(const std::string& name);

struct TrainConfig {
  int T = 10;                 // window length, frames
  int stride = 0;             // window stride; 0 means T / 2
  int batch = 32;             // windows per optimizer step
  double lr = 1e-3;
  int max_epochs = 60;
  int patience = 10;          // epochs without validation improvement
  double dropout = 0.33;      // FC-input and recurrent dropout
  std::uint64_t seed = 7;
  Loss loss = Loss::ml;
  double validation_fraction = 0.15;  // tail of every training episode
  int epistemic_windows = 16; // windows used for the epistemic diagnostic
  int epistemic_samples = 10; // MC passes per window for that diagnostic
  /// From this epoch on, carry the hidden state across consecutive windows
  /// of an episode (truncated BPTT) instead of restarting every window from
  /// zero. 0 disables. When enabled, validation streams each held-out tail
  /// from a zero state for every epoch.
  int stateful_from = 0;

  bool stateful_epoch(int epoch) const { return stateful_from > 0 && epoch >= stateful_from; }

  int effective_stride() const { return stride > 0 ? stride : std::max(1, T / 2); }
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// A length-T slice of one episode.
struct Window {
  std::size_t episode = 0;
  std::size_t start = 0;
};

struct WindowSplit {
  std::vector<Window> train;
  std::vector<Window> validation;
};

/// Windows of length T with the configured stride. The last
/// validation_fraction of every episode's frames is held out; no window
/// straddles the boundary. Throws InvalidSpec when an episode has fewer than
/// 2 T frames.
WindowSplit make_windows(std::span<const dataset::EpisodeData> episodes, const TrainConfig& config);

/// Mean per-step loss of one window and its gradient with respect to the
/// head outputs, scaled by `scale`.
template <typename T>
double window_loss(std::span<const mlcrnn::HeadOutputs<T>> heads, std::span<const State> truth, Loss loss,
                   double scale, std::vector<mlcrnn::HeadGradient<T>>* grads);

struct EpochRecord {
  int epoch = 0;               // 0 is the untrained model
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_nll = 0.0;
  double epistemic_trace = 0.0;  // mean trace of the MC-dropout covariance on training windows
  double seconds = 0.0;
};

struct TrainResult {
  mlcrnn::MlCrnnModel<float> model;
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  int epochs_run = 0;
};

/// Minimizes the mean window loss with Adam and keeps the parameters of the
/// best validation epoch. Throws NumericError when the loss or a gradient
/// stops being finite.
TrainResult train(const TrainConfig& config, std::span<const dataset::EpisodeData> episodes,
                  const mlcrnn::ModelConfig& model_config = {},
                  const std::function<void(const EpochRecord&)>& progress = {});

/// First held-out frame of an episode with `frames` frames.
std::size_t validation_boundary(std::size_t frames, const TrainConfig& config);

/// Validation loss in eval mode.
double evaluate_loss(const mlcrnn::MlCrnnModel<float>& model, std::span<const dataset::EpisodeData> episodes,
                     std::span<const Window> windows, int T, Loss loss);

/// Mean per-frame loss of eval-mode streaming over each episode's held-out
/// tail from a zero hidden state, averaged over episodes.
double evaluate_tail_loss(const mlcrnn::MlCrnnModel<float>& model, std::span<const dataset::EpisodeData> episodes,
                          const TrainConfig& config, Loss loss);

void write_curve_csv(const std::filesystem::path& path, std::span<const EpochRecord> curve);

}  // namespace radartrack::training
