#include "radartrack/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "radartrack/nn/adam.hpp"
#include "radartrack/uncertainty.hpp"

namespace radartrack::training {

using nlohmann::json;
using mlcrnn::FrameView;
using mlcrnn::HeadGradient;
using mlcrnn::HeadOutputs;
using mlcrnn::MlCrnnModel;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

std::vector<FrameView<float>> window_frames(const dataset::EpisodeData& ep, std::size_t start, int T) {
  std::vector<FrameView<float>> frames;
  frames.reserve(static_cast<std::size_t>(T));
  for (std::size_t f = start; f < start + static_cast<std::size_t>(T); ++f) {
    frames.push_back({{ep.rd_frame(f), ep.rd_size}, {ep.ra_frame(f), ep.ra_size}});
  }
  return frames;
}

std::span<const State> window_truth(const dataset::EpisodeData& ep, std::size_t start, int T) {
  return std::span<const State>(ep.truth).subspan(start, static_cast<std::size_t>(T));
}

// Mean trace of the MC-dropout covariance of the state estimate, averaged
// over every step of the given windows.
double epistemic_trace(const MlCrnnModel<float>& model, std::span<const dataset::EpisodeData> episodes,
                       std::span<const Window> windows, int T, int samples, std::uint64_t seed) {
  if (windows.empty() || samples < 2) return 0.0;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto frames = window_frames(episodes[windows[w].episode], windows[w].start, T);
    auto state = mlcrnn::make_stream_state(model, samples, nn::Mode::mc, derive_seed(seed, w));
    std::vector<uncertainty::McSample> mc(static_cast<std::size_t>(samples));
    for (const auto& frame : frames) {
      const auto heads = mlcrnn::stream_step(model, state, frame);
      for (std::size_t m = 0; m < heads.size(); ++m) {
        for (int k = 0; k < 4; ++k) mc[m].x_hat(k) = heads[m].x_hat[static_cast<std::size_t>(k)];
      }
      sum += uncertainty::fuse_mc_samples(mc).covariance.epistemic.trace();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

const char* to_string(Loss loss) { return loss == Loss::ml ? "ml" : "mse"; }

Loss loss_from_string(const std::string& name) {
  if (name == "ml") return Loss::ml;
  if (name == "mse") return Loss::mse;
  throw InvalidSpec("unknown loss '" + name + "' (expected ml or mse)");
}

void TrainConfig::validate() const {
  if (T < 1) throw InvalidSpec("train: T must be >= 1");
  if (batch < 1 || max_epochs < 0 || patience < 1 || stride < 0) throw InvalidSpec("train: invalid batch/epoch settings");
  if (!(lr > 0.0)) throw InvalidSpec("train: learning rate must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidSpec("train: dropout must lie in [0, 1)");
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw InvalidSpec("train: validation fraction must lie in (0, 0.5]");
  }
  if (epistemic_windows < 0 || epistemic_samples < 0) throw InvalidSpec("train: invalid diagnostic settings");
  if (stateful_from < 0) throw InvalidSpec("train: stateful_from must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"T", c.T},
          {"stride", c.stride},
          {"batch", c.batch},
          {"lr", c.lr},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"dropout", c.dropout},
          {"seed", c.seed},
          {"loss", to_string(c.loss)},
          {"validation_fraction", c.validation_fraction},
          {"epistemic_windows", c.epistemic_windows},
          {"epistemic_samples", c.epistemic_samples},
          {"stateful_from", c.stateful_from}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  maybe(j, "T", c.T);
  maybe(j, "stride", c.stride);
  maybe(j, "batch", c.batch);
  maybe(j, "lr", c.lr);
  maybe(j, "max_epochs", c.max_epochs);
  maybe(j, "patience", c.patience);
  maybe(j, "dropout", c.dropout);
  maybe(j, "seed", c.seed);
  if (j.contains("loss")) c.loss = loss_from_string(j.at("loss").get<std::string>());
  maybe(j, "validation_fraction", c.validation_fraction);
  maybe(j, "epistemic_windows", c.epistemic_windows);
  maybe(j, "epistemic_samples", c.epistemic_samples);
  maybe(j, "stateful_from", c.stateful_from);
  c.validate();
  return c;
}

std::size_t validation_boundary(std::size_t frames, const TrainConfig& config) {
  const auto T = static_cast<std::size_t>(config.T);
  const auto held = std::max<std::size_t>(
      T, static_cast<std::size_t>(std::ceil(config.validation_fraction * static_cast<double>(frames))));
  return frames - std::min(held, frames - T);
}

WindowSplit make_windows(std::span<const dataset::EpisodeData> episodes, const TrainConfig& config) {
  config.validate();
  const auto T = static_cast<std::size_t>(config.T);
  const auto stride = static_cast<std::size_t>(config.effective_stride());
  WindowSplit split;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const std::size_t n = episodes[e].frames();
    if (n < 2 * T) throw InvalidSpec("train: episode " + std::to_string(e) + " has fewer than 2 T frames");
    const std::size_t boundary = validation_boundary(n, config);
    for (std::size_t s = 0; s + T <= boundary; s += stride) split.train.push_back({e, s});
    for (std::size_t s = boundary; s + T <= n; s += stride) split.validation.push_back({e, s});
  }
  if (split.train.empty() || split.validation.empty()) throw InvalidSpec("train: not enough frames for windows");
  return split;
}

template <typename T>
double window_loss(std::span<const HeadOutputs<T>> heads, std::span<const State> truth, Loss loss, double scale,
                   std::vector<HeadGradient<T>>* grads) {
  if (heads.size() != truth.size() || heads.empty()) throw ShapeError("window_loss: heads and truth differ");
  const double steps = static_cast<double>(heads.size());
  if (grads) grads->assign(heads.size(), HeadGradient<T>{});
  double total = 0.0;
  for (std::size_t t = 0; t < heads.size(); ++t) {
    const auto& h = heads[t];
    uncertainty::Vec4 x, x_hat, alpha;
    uncertainty::Vec6 beta;
    for (int k = 0; k < 4; ++k) {
      x(k) = truth[t][static_cast<std::size_t>(k)];
      x_hat(k) = static_cast<double>(h.x_hat[static_cast<std::size_t>(k)]);
      alpha(k) = static_cast<double>(h.alpha[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < 6; ++k) beta(k) = static_cast<double>(h.beta[static_cast<std::size_t>(k)]);
    if (!x_hat.allFinite() || !alpha.allFinite() || !beta.allFinite() || !(alpha.minCoeff() > 0.0)) {
      throw NumericError("training: non-finite network output");
    }
    if (loss == Loss::ml) {
      const auto g = uncertainty::gaussian_nll_with_grad(x, x_hat, alpha, beta);
      total += g.value;
      if (grads) {
        auto& d = (*grads)[t];
        const double s = scale / steps;
        for (int k = 0; k < 4; ++k) {
          d.d_x_hat[static_cast<std::size_t>(k)] = static_cast<T>(s * g.d_x_hat(k));
          d.d_alpha[static_cast<std::size_t>(k)] = static_cast<T>(s * g.d_alpha(k));
        }
        for (int k = 0; k < 6; ++k) d.d_beta[static_cast<std::size_t>(k)] = static_cast<T>(s * g.d_beta(k));
      }
    } else {
      const uncertainty::Vec4 e = x_hat - x;
      total += e.squaredNorm() / 4.0;
      if (grads) {
        for (int k = 0; k < 4; ++k) {
          (*grads)[t].d_x_hat[static_cast<std::size_t>(k)] = static_cast<T>(scale / steps * 0.5 * e(k));
        }
      }
    }
  }
  const double mean = total / steps;
  if (!std::isfinite(mean)) throw NumericError("training: non-finite loss");
  return mean;
}

template double window_loss<float>(std::span<const HeadOutputs<float>>, std::span<const State>, Loss, double,
                                   std::vector<HeadGradient<float>>*);
template double window_loss<double>(std::span<const HeadOutputs<double>>, std::span<const State>, Loss, double,
                                    std::vector<HeadGradient<double>>*);

double evaluate_loss(const MlCrnnModel<float>& model, std::span<const dataset::EpisodeData> episodes,
                     std::span<const Window> windows, int T, Loss loss) {
  if (windows.empty()) throw InvalidSpec("evaluate_loss: no windows");
  double sum = 0.0;
  for (const auto& w : windows) {
    const auto frames = window_frames(episodes[w.episode], w.start, T);
    const auto heads = mlcrnn::forward_sequence<float>(model, frames, nn::Mode::eval, 0);
    sum += window_loss<float>(heads, window_truth(episodes[w.episode], w.start, T), loss, 1.0, nullptr);
  }
  return sum / static_cast<double>(windows.size());
}

double evaluate_tail_loss(const MlCrnnModel<float>& model, std::span<const dataset::EpisodeData> episodes,
                          const TrainConfig& config, Loss loss) {
  if (episodes.empty()) throw InvalidSpec("evaluate_tail_loss: no episodes");
  double sum = 0.0;
  for (const auto& ep : episodes) {
    const std::size_t start = validation_boundary(ep.frames(), config);
    const int len = static_cast<int>(ep.frames() - start);
    const auto frames = window_frames(ep, start, len);
    const auto heads = mlcrnn::forward_sequence<float>(model, frames, nn::Mode::eval, 0);
    sum += window_loss<float>(heads, window_truth(ep, start, len), loss, 1.0, nullptr);
  }
  return sum / static_cast<double>(episodes.size());
}

TrainResult train(const TrainConfig& config, std::span<const dataset::EpisodeData> episodes,
                  const mlcrnn::ModelConfig& model_config, const std::function<void(const EpochRecord&)>& progress) {
  config.validate();
  mlcrnn::ModelConfig mc = model_config;
  mc.fc_dropout = config.dropout;
  mc.recurrent_dropout = config.dropout;
  TrainResult result{MlCrnnModel<float>(mc), {}, 0, 0};
  MlCrnnModel<float>& model = result.model;
  for (const auto& ep : episodes) {
    if (ep.rd_size != static_cast<std::size_t>(mc.input_h) * mc.rd_w ||
        ep.ra_size != static_cast<std::size_t>(mc.input_h) * mc.ra_w) {
      throw ShapeError("train: episode images do not match the model input shape");
    }
  }
  model.initialize(derive_seed(config.seed, 0));
  model.zero_grad();

  const WindowSplit split = make_windows(episodes, config);
  std::vector<Window> diag;
  const std::size_t n_diag = std::min<std::size_t>(static_cast<std::size_t>(config.epistemic_windows), split.train.size());
  for (std::size_t i = 0; i < n_diag; ++i) diag.push_back(split.train[i * split.train.size() / n_diag]);

  auto params = model.parameter_pointers();
  nn::AdamConfig adam_config;
  adam_config.lr = config.lr;
  auto adam = nn::make_adam_state<float>(params, adam_config);

  auto record = [&](int epoch, double train_loss, double seconds) {
    EpochRecord r;
    r.epoch = epoch;
    r.train_loss = train_loss;
    auto validate = [&](Loss l) {
      return config.stateful_from > 0 ? evaluate_tail_loss(model, episodes, config, l)
                             : evaluate_loss(model, episodes, split.validation, config.T, l);
    };
    r.validation_loss = validate(config.loss);
    r.validation_nll = config.loss == Loss::ml ? r.validation_loss : validate(Loss::ml);
    r.epistemic_trace = epistemic_trace(model, episodes, diag, config.T, config.epistemic_samples,
                                        derive_seed(config.seed, 3000 + static_cast<std::uint64_t>(epoch)));
    r.seconds = seconds;
    result.curve.push_back(r);
    if (progress) progress(r);
    return r;
  };

  double best = record(0, std::numeric_limits<double>::quiet_NaN(), 0.0).validation_loss;
  std::vector<std::vector<float>> best_params;
  for (const auto& p : model.parameters()) best_params.push_back(p.values);
  int bad = 0;

  std::vector<Window> order = split.train;
  std::vector<HeadGradient<float>> grads;
  mlcrnn::SequenceTrace<float> trace;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::uint64_t epoch_seed = derive_seed(config.seed, 2000 + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    std::size_t windows_run = 0;
    auto run_window = [&](const dataset::EpisodeData& ep, std::size_t start, double scale, std::uint64_t seed,
                          std::span<const float> h0) {
      const auto frames = window_frames(ep, start, config.T);
      const auto heads = mlcrnn::forward_sequence<float>(model, frames, nn::Mode::train, seed, &trace, h0);
      loss_sum += window_loss<float>(heads, window_truth(ep, start, config.T), config.loss, scale, &grads);
      mlcrnn::backward_sequence<float>(model, trace, grads);
      ++windows_run;
    };
    const bool stateful = config.stateful_epoch(epoch);
    if (stateful) {
      // Groups of `batch` episodes advance in lockstep, one window each per
      // optimizer step, each from a random offset in [0, T).
      std::vector<std::size_t> episode_order(episodes.size());
      std::iota(episode_order.begin(), episode_order.end(), std::size_t{0});
      std::shuffle(episode_order.begin(), episode_order.end(), shuffle_rng);
      std::uniform_int_distribution<std::size_t> offset(0, static_cast<std::size_t>(config.T) - 1);
      std::uint64_t counter = 0;
      for (std::size_t g0 = 0; g0 < episode_order.size(); g0 += static_cast<std::size_t>(config.batch)) {
        const std::size_t g1 = std::min(episode_order.size(), g0 + static_cast<std::size_t>(config.batch));
        std::vector<std::size_t> pos(g1 - g0);
        std::vector<std::vector<float>> hidden(g1 - g0);
        for (auto& p : pos) p = offset(shuffle_rng);
        for (;;) {
          std::vector<std::size_t> active;
          for (std::size_t i = 0; i < pos.size(); ++i) {
            const auto& ep = episodes[episode_order[g0 + i]];
            if (pos[i] + static_cast<std::size_t>(config.T) <= validation_boundary(ep.frames(), config)) {
              active.push_back(i);
            }
          }
          if (active.empty()) break;
          model.zero_grad();
          const double scale = 1.0 / static_cast<double>(active.size());
          for (std::size_t i : active) {
            run_window(episodes[episode_order[g0 + i]], pos[i], scale, derive_seed(epoch_seed, counter++),
                       hidden[i]);
            hidden[i] = trace.steps.back().hidden;
            pos[i] += static_cast<std::size_t>(config.T);
          }
          nn::adam_step<float>(params, adam);
        }
      }
    }
    for (std::size_t b0 = 0; !stateful && b0 < order.size(); b0 += static_cast<std::size_t>(config.batch)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(config.batch));
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      model.zero_grad();
      for (std::size_t i = b0; i < b1; ++i) {
        run_window(episodes[order[i].episode], order[i].start, scale, derive_seed(epoch_seed, i), {});
      }
      nn::adam_step<float>(params, adam);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const EpochRecord r = record(epoch, loss_sum / static_cast<double>(std::max<std::size_t>(windows_run, 1)), seconds);
    result.epochs_run = epoch;
    if (r.validation_loss < best) {
      best = r.validation_loss;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < best_params.size(); ++i) best_params[i] = model.parameters()[i].values;
      bad = 0;
    } else if (++bad >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < best_params.size(); ++i) model.parameters()[i].values = best_params[i];
  for (auto& p : model.parameters()) p.grad.clear();
  return result;
}

void write_curve_csv(const std::filesystem::path& path, std::span<const EpochRecord> curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,validation_loss,validation_nll,epistemic_trace\n";
  char buf[256];
  for (const auto& r : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.validation_loss,
                  r.validation_nll, r.epistemic_trace);
    out << buf;
  }
}

}  // namespace radartrack::training
