#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "radartrack/nn/ops.hpp"
#include "radartrack/nn/tensor.hpp"

namespace radartrack::mlcrnn {

/// Architecture hyper-parameters. The defaults are the full-size tracker:
/// two 134 x 64 input images, four stride-2 conv layers per branch with
/// (4, 8, 16, 4) feature maps, a 16-d compressed observation, a 128-unit GRU
/// and three linear heads.
struct ModelConfig {
  int input_h = 134;
  int rd_w = 64;
  int ra_w = 64;
  std::array<int, 4> channels{4, 8, 16, 4};
  int obs_dim = 16;
  int hidden = 128;
  double fc_dropout = 0.33;
  double recurrent_dropout = 0.33;

  /// Canonical text used for the architecture hash in checkpoints.
  std::string describe() const;
  std::string architecture_hash() const;
};

inline constexpr int kStateDim = 4;
inline constexpr int kBetaDim = 6;

/// Output of the three heads at one time step.
template <typename T>
struct HeadOutputs {
  std::array<T, kStateDim> x_hat{};  // [x, y, vx, vy] in m and m/s
  std::array<T, kStateDim> alpha{};  // exp head, > 0
  std::array<T, kBetaDim> beta{};    // tanh head, in (-1, 1)
};

/// Parameter tensors in checkpoint order:
///   rd.conv{1..4}.{kernel,bias}, ra.conv{1..4}.{kernel,bias},
///   fc.{weight,bias}, gru.{w,u,b}, head_x.{weight,bias},
///   head_alpha.{weight,bias}, head_beta.{weight,bias}.
/// Conv kernels are 3 x 3 x C_in x C_out; dense weights are out x in.
template <typename T>
class MlCrnnModel {
 public:
  explicit MlCrnnModel(ModelConfig config = {});

  const ModelConfig& config() const { return config_; }

  /// Uniform(+-1/sqrt(fan_in)) weights and zero biases.
  void initialize(std::uint64_t seed);

  std::vector<nn::Tensor<T>>& parameters() { return params_; }
  const std::vector<nn::Tensor<T>>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::vector<nn::Tensor<T>*> parameter_pointers();
  void zero_grad();

  const nn::Conv2dGeometry& geometry(int branch, int layer) const { return geometry_[branch][layer]; }
  /// Flattened conv output length of one branch.
  std::size_t branch_features(int branch) const;
  std::size_t features() const { return branch_features(0) + branch_features(1); }

  nn::Tensor<T>& conv_kernel(int branch, int layer) { return params_[conv_index(branch, layer)]; }
  nn::Tensor<T>& conv_bias(int branch, int layer) { return params_[conv_index(branch, layer) + 1]; }
  const nn::Tensor<T>& conv_kernel(int branch, int layer) const { return params_[conv_index(branch, layer)]; }
  const nn::Tensor<T>& conv_bias(int branch, int layer) const { return params_[conv_index(branch, layer) + 1]; }
  nn::Tensor<T>& param(std::size_t index) { return params_[index]; }
  const nn::Tensor<T>& param(std::size_t index) const { return params_[index]; }

  static constexpr std::size_t kFcWeight = 16;
  static constexpr std::size_t kFcBias = 17;
  static constexpr std::size_t kGruW = 18;
  static constexpr std::size_t kGruU = 19;
  static constexpr std::size_t kGruB = 20;
  static constexpr std::size_t kHeadXWeight = 21;
  static constexpr std::size_t kHeadXBias = 22;
  static constexpr std::size_t kHeadAlphaWeight = 23;
  static constexpr std::size_t kHeadAlphaBias = 24;
  static constexpr std::size_t kHeadBetaWeight = 25;
  static constexpr std::size_t kHeadBetaBias = 26;

  nn::GruView<T> gru_view() const;

 private:
  static std::size_t conv_index(int branch, int layer) {
    return static_cast<std::size_t>(branch * 8 + layer * 2);
  }

  ModelConfig config_;
  std::array<std::array<nn::Conv2dGeometry, 4>, 2> geometry_;
  std::vector<nn::Tensor<T>> params_;
  std::vector<std::string> names_;
};

/// Exact sum of parameter tensor sizes.
template <typename T>
std::size_t count_parameters(const MlCrnnModel<T>& model);

/// Layer-by-layer closed form: 9 C_in C_out + C_out per conv layer,
/// (in + 1) out per dense layer, 3 ((I + H) H + H) for the GRU.
std::size_t closed_form_parameter_count(const ModelConfig& config);

/// One RD/RA image pair, row-major H x W, values in [0, 1].
template <typename T>
struct FrameView {
  std::span<const T> rd;
  std::span<const T> ra;
};

/// Activations of both conv branches for one frame.
template <typename T>
struct ConvTrace {
  // outputs[branch][layer], post-ELU, HWC.
  std::array<std::array<std::vector<T>, 4>, 2> outputs;
  std::span<const T> rd;
  std::span<const T> ra;
};

/// Flattened, concatenated conv features (RD branch first). Deterministic:
/// dropout only acts after this point.
template <typename T>
std::vector<T> conv_features(const MlCrnnModel<T>& model, const FrameView<T>& frame,
                             ConvTrace<T>* trace = nullptr);

/// Everything the backward pass needs about one time step.
template <typename T>
struct StepTrace {
  ConvTrace<T> conv;
  std::vector<T> features;      // y_t before dropout
  std::vector<T> fc_mask;       // empty in eval mode
  std::vector<T> fc_input;      // y_t after dropout
  std::vector<T> observation;   // o_t = ELU(W_fc y + b_fc)
  nn::GruCache<T> gru;
  std::vector<T> hidden;        // h_t
  HeadOutputs<T> heads;
};

template <typename T>
struct SequenceTrace {
  std::vector<T> recurrent_mask;  // empty in eval mode
  std::vector<StepTrace<T>> steps;
};

/// Compressed observation o_t for one frame.
template <typename T>
std::vector<T> conv_block(const MlCrnnModel<T>& model, const FrameView<T>& frame, nn::Mode mode,
                          std::uint64_t seed);

/// Unrolls the network over `frames` from h_0 (zero when `h0` is empty). In
/// train/mc mode one recurrent mask is drawn per sequence and a fresh FC-input
/// mask per frame, all from `seed`. Fills `trace` when given; the final hidden
/// state is trace->steps.back().hidden. backward_sequence treats h_0 as a
/// constant.
template <typename T>
std::vector<HeadOutputs<T>> forward_sequence(const MlCrnnModel<T>& model,
                                             std::span<const FrameView<T>> frames, nn::Mode mode,
                                             std::uint64_t seed, SequenceTrace<T>* trace = nullptr,
                                             std::span<const T> h0 = {});

/// Gradient of the loss with respect to the head outputs at one step.
template <typename T>
struct HeadGradient {
  std::array<T, kStateDim> d_x_hat{};
  std::array<T, kStateDim> d_alpha{};
  std::array<T, kBetaDim> d_beta{};
};

/// Backpropagation through time; accumulates into every parameter's grad
/// (call zero_grad() first for a fresh batch).
template <typename T>
void backward_sequence(MlCrnnModel<T>& model, const SequenceTrace<T>& trace,
                       std::span<const HeadGradient<T>> d_heads);

/// Per-track inference state: one hidden state, recurrent mask and RNG per
/// Monte-Carlo replica.
template <typename T>
struct StreamState {
  nn::Mode mode = nn::Mode::eval;
  std::vector<std::vector<T>> hidden;
  std::vector<std::vector<T>> recurrent_masks;
  std::vector<std::mt19937_64> rngs;
  std::size_t frame_index = 0;

  std::size_t replicas() const { return hidden.size(); }
};

/// Zero hidden state for each replica. Throws InvalidSpec when replicas < 1.
template <typename T>
StreamState<T> make_stream_state(const MlCrnnModel<T>& model, int replicas, nn::Mode mode,
                                 std::uint64_t seed);

/// Advances every replica by one frame. The conv block runs once per frame
/// and is shared; each replica applies its own dropout masks.
template <typename T>
std::vector<HeadOutputs<T>> stream_step(const MlCrnnModel<T>& model, StreamState<T>& state,
                                        const FrameView<T>& frame);

}  // namespace radartrack::mlcrnn
