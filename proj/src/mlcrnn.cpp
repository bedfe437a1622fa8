#include "radartrack/mlcrnn.hpp"

#include <cmath>
#include <sstream>

namespace radartrack::mlcrnn {

using nn::Tensor;

std::string ModelConfig::describe() const {
  std::ostringstream s;
  s << "mlcrnn input=" << input_h << "x(" << rd_w << "," << ra_w << ") conv3x3s2same channels=" << channels[0]
    << "," << channels[1] << "," << channels[2] << "," << channels[3] << " elu obs=" << obs_dim
    << " gru=" << hidden << " gates=z,r,n h'=(1-z)h+zn bias=single heads=x,exp(alpha),tanh(beta)"
    << " beta_order=(2,1),(3,1),(3,2),(4,1),(4,2),(4,3) flatten=hwc rd_first";
  return s.str();
}

std::string ModelConfig::architecture_hash() const {
  Fnv1a h;
  h.update(describe());
  return h.hex();
}

template <typename T>
MlCrnnModel<T>::MlCrnnModel(ModelConfig config) : config_(config) {
  if (config_.input_h <= 0 || config_.rd_w <= 0 || config_.ra_w <= 0 || config_.obs_dim <= 0 ||
      config_.hidden <= 0) {
    throw InvalidSpec("model dimensions must be positive");
  }
  if (config_.fc_dropout < 0.0 || config_.fc_dropout >= 1.0 || config_.recurrent_dropout < 0.0 ||
      config_.recurrent_dropout >= 1.0) {
    throw InvalidSpec("dropout probabilities must lie in [0, 1)");
  }
  const char* branch_names[2] = {"rd", "ra"};
  for (int b = 0; b < 2; ++b) {
    int h = config_.input_h, w = b == 0 ? config_.rd_w : config_.ra_w, c = 1;
    for (int l = 0; l < 4; ++l) {
      const int co = config_.channels[static_cast<std::size_t>(l)];
      geometry_[b][l] = nn::conv2d_geometry(h, w, c, co);
      const std::string prefix = std::string(branch_names[b]) + ".conv" + std::to_string(l + 1);
      params_.emplace_back(std::vector<std::size_t>{3, 3, static_cast<std::size_t>(c), static_cast<std::size_t>(co)});
      names_.push_back(prefix + ".kernel");
      params_.emplace_back(std::vector<std::size_t>{static_cast<std::size_t>(co)});
      names_.push_back(prefix + ".bias");
      h = geometry_[b][l].out_h;
      w = geometry_[b][l].out_w;
      c = co;
    }
  }
  const auto O = static_cast<std::size_t>(config_.obs_dim);
  const auto H = static_cast<std::size_t>(config_.hidden);
  auto dense = [&](const std::string& name, std::size_t out, std::size_t in) {
    params_.emplace_back(std::vector<std::size_t>{out, in});
    names_.push_back(name + ".weight");
    params_.emplace_back(std::vector<std::size_t>{out});
    names_.push_back(name + ".bias");
  };
  dense("fc", O, features());
  params_.emplace_back(std::vector<std::size_t>{3 * H, O});
  names_.push_back("gru.w");
  params_.emplace_back(std::vector<std::size_t>{3 * H, H});
  names_.push_back("gru.u");
  params_.emplace_back(std::vector<std::size_t>{3 * H});
  names_.push_back("gru.b");
  dense("head_x", kStateDim, H);
  dense("head_alpha", kStateDim, H);
  dense("head_beta", kBetaDim, H);
}

template <typename T>
std::size_t MlCrnnModel<T>::branch_features(int branch) const {
  return geometry_[branch][3].output_size();
}

template <typename T>
void MlCrnnModel<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.rank() == 1) {
      std::fill(p.values.begin(), p.values.end(), T(0));
      continue;
    }
    // Kernels are 3 x 3 x C_in x C_out; dense weights are out x in.
    const std::size_t fan_in = p.rank() == 4 ? 9 * p.dim(2) : p.dim(1);
    const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : p.values) v = static_cast<T>(dist(rng));
  }
}

template <typename T>
std::vector<Tensor<T>*> MlCrnnModel<T>::parameter_pointers() {
  std::vector<Tensor<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
void MlCrnnModel<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
nn::GruView<T> MlCrnnModel<T>::gru_view() const {
  return {params_[kGruW].values, params_[kGruU].values, params_[kGruB].values, config_.obs_dim,
          config_.hidden};
}

template <typename T>
std::size_t count_parameters(const MlCrnnModel<T>& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.size();
  return n;
}

std::size_t closed_form_parameter_count(const ModelConfig& c) {
  std::size_t total = 0;
  for (int b = 0; b < 2; ++b) {
    int h = c.input_h, w = b == 0 ? c.rd_w : c.ra_w;
    std::size_t cin = 1;
    for (int l = 0; l < 4; ++l) {
      const auto cout = static_cast<std::size_t>(c.channels[static_cast<std::size_t>(l)]);
      total += 9 * cin * cout + cout;
      h = (h + 1) / 2;
      w = (w + 1) / 2;
      cin = cout;
    }
    // Flattened branch output feeds the FC layer.
    total += static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * cin * static_cast<std::size_t>(c.obs_dim);
  }
  const auto O = static_cast<std::size_t>(c.obs_dim);
  const auto H = static_cast<std::size_t>(c.hidden);
  total += O;                       // fc bias
  total += 3 * ((O + H) * H + H);  // GRU
  total += (H + 1) * kStateDim * 2 + (H + 1) * kBetaDim;
  return total;
}

namespace {

template <typename T>
void run_branch(const MlCrnnModel<T>& model, int branch, std::span<const T> image,
                std::array<std::vector<T>, 4>& outputs) {
  std::span<const T> input = image;
  for (int l = 0; l < 4; ++l) {
    const auto& g = model.geometry(branch, l);
    auto& out = outputs[static_cast<std::size_t>(l)];
    out.resize(g.output_size());
    nn::conv2d_forward<T>(g, input, model.conv_kernel(branch, l).values, model.conv_bias(branch, l).values, out);
    nn::elu_forward<T>(out, out);
    input = out;
  }
}

template <typename T>
void apply_heads(const MlCrnnModel<T>& model, std::span<const T> h, HeadOutputs<T>& out) {
  using M = MlCrnnModel<T>;
  nn::fc_forward<T>(h, model.param(M::kHeadXWeight).values, model.param(M::kHeadXBias).values, out.x_hat);
  nn::fc_forward<T>(h, model.param(M::kHeadAlphaWeight).values, model.param(M::kHeadAlphaBias).values,
                    out.alpha);
  for (auto& a : out.alpha) a = std::exp(a);
  nn::fc_forward<T>(h, model.param(M::kHeadBetaWeight).values, model.param(M::kHeadBetaBias).values,
                    out.beta);
  for (auto& b : out.beta) b = std::tanh(b);
}

// Dropout on the FC input, FC + ELU, GRU update and heads. Shared by the
// sequence and streaming paths so both produce identical arithmetic.
template <typename T>
void recurrent_step(const MlCrnnModel<T>& model, std::span<const T> h_prev,
                    std::span<const T> recurrent_mask, StepTrace<T>& st) {
  using M = MlCrnnModel<T>;
  st.fc_input = st.features;
  if (!st.fc_mask.empty()) {
    for (std::size_t i = 0; i < st.fc_input.size(); ++i) st.fc_input[i] *= st.fc_mask[i];
  }
  st.observation.resize(static_cast<std::size_t>(model.config().obs_dim));
  nn::fc_forward<T>(st.fc_input, model.param(M::kFcWeight).values, model.param(M::kFcBias).values, st.observation);
  nn::elu_forward<T>(st.observation, st.observation);
  st.hidden.resize(static_cast<std::size_t>(model.config().hidden));
  nn::gru_forward<T>(model.gru_view(), st.observation, h_prev, recurrent_mask, st.hidden, st.gru);
  apply_heads(model, std::span<const T>(st.hidden), st.heads);
}

}  // namespace

template <typename T>
std::vector<T> conv_features(const MlCrnnModel<T>& model, const FrameView<T>& frame, ConvTrace<T>* trace) {
  const auto& c = model.config();
  const std::size_t rd_size = static_cast<std::size_t>(c.input_h) * c.rd_w;
  const std::size_t ra_size = static_cast<std::size_t>(c.input_h) * c.ra_w;
  if (frame.rd.size() != rd_size || frame.ra.size() != ra_size) {
    throw ShapeError("conv_block: frame images do not match the model input shape");
  }
  ConvTrace<T> local;
  ConvTrace<T>& t = trace ? *trace : local;
  t.rd = frame.rd;
  t.ra = frame.ra;
  run_branch(model, 0, frame.rd, t.outputs[0]);
  run_branch(model, 1, frame.ra, t.outputs[1]);
  std::vector<T> y;
  y.reserve(model.features());
  y.insert(y.end(), t.outputs[0][3].begin(), t.outputs[0][3].end());
  y.insert(y.end(), t.outputs[1][3].begin(), t.outputs[1][3].end());
  return y;
}

template <typename T>
std::vector<T> conv_block(const MlCrnnModel<T>& model, const FrameView<T>& frame, nn::Mode mode,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StepTrace<T> st;
  st.features = conv_features(model, frame);
  if (mode != nn::Mode::eval) st.fc_mask = nn::dropout_mask<T>(st.features.size(), model.config().fc_dropout, mode, rng);
  st.fc_input = st.features;
  for (std::size_t i = 0; i < st.fc_mask.size(); ++i) st.fc_input[i] *= st.fc_mask[i];
  using M = MlCrnnModel<T>;
  std::vector<T> o(static_cast<std::size_t>(model.config().obs_dim));
  nn::fc_forward<T>(st.fc_input, model.param(M::kFcWeight).values, model.param(M::kFcBias).values, o);
  nn::elu_forward<T>(o, o);
  return o;
}

template <typename T>
std::vector<HeadOutputs<T>> forward_sequence(const MlCrnnModel<T>& model,
                                             std::span<const FrameView<T>> frames, nn::Mode mode,
                                             std::uint64_t seed, SequenceTrace<T>* trace,
                                             std::span<const T> h0) {
  if (frames.empty()) throw InvalidSpec("forward_sequence: need at least one frame");
  const auto H = static_cast<std::size_t>(model.config().hidden);
  if (!h0.empty() && h0.size() != H) throw ShapeError("forward_sequence: initial hidden state has the wrong size");
  std::mt19937_64 rng(seed);
  SequenceTrace<T> local;
  SequenceTrace<T>& tr = trace ? *trace : local;
  tr.recurrent_mask.clear();
  if (mode != nn::Mode::eval) {
    tr.recurrent_mask = nn::dropout_mask<T>(H, model.config().recurrent_dropout, mode, rng);
  }
  tr.steps.assign(trace ? frames.size() : 1, StepTrace<T>{});

  std::vector<HeadOutputs<T>> out;
  out.reserve(frames.size());
  std::vector<T> h = h0.empty() ? std::vector<T>(H, T(0)) : std::vector<T>(h0.begin(), h0.end());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    StepTrace<T>& st = tr.steps[trace ? t : 0];
    st.features = conv_features(model, frames[t], trace ? &st.conv : nullptr);
    st.fc_mask.clear();
    if (mode != nn::Mode::eval) {
      st.fc_mask = nn::dropout_mask<T>(st.features.size(), model.config().fc_dropout, mode, rng);
    }
    recurrent_step(model, std::span<const T>(h), std::span<const T>(tr.recurrent_mask), st);
    h = st.hidden;
    out.push_back(st.heads);
  }
  return out;
}

template <typename T>
void backward_sequence(MlCrnnModel<T>& model, const SequenceTrace<T>& trace,
                       std::span<const HeadGradient<T>> d_heads) {
  using M = MlCrnnModel<T>;
  if (d_heads.size() != trace.steps.size()) throw ShapeError("backward_sequence: one gradient per step required");
  for (auto& p : model.parameters()) {
    if (!p.has_grad()) p.zero_grad();
  }
  const auto H = static_cast<std::size_t>(model.config().hidden);
  const auto O = static_cast<std::size_t>(model.config().obs_dim);
  const nn::GruView<T> gru = model.gru_view();
  const nn::GruGrads<T> gru_grads{model.param(M::kGruW).grad, model.param(M::kGruU).grad,
                                  model.param(M::kGruB).grad};

  std::vector<T> dh_next(H, T(0)), dh(H), dh_head(H), dh_prev(H), d_obs(O), d_fc_input(model.features());
  for (std::size_t ti = trace.steps.size(); ti-- > 0;) {
    const StepTrace<T>& st = trace.steps[ti];
    const HeadGradient<T>& g = d_heads[ti];

    // Heads.
    std::array<T, kStateDim> d_pre_alpha{};
    std::array<T, kBetaDim> d_pre_beta{};
    for (int i = 0; i < kStateDim; ++i) d_pre_alpha[i] = g.d_alpha[i] * st.heads.alpha[i];
    for (int i = 0; i < kBetaDim; ++i) d_pre_beta[i] = g.d_beta[i] * (T(1) - st.heads.beta[i] * st.heads.beta[i]);
    dh = dh_next;
    auto head_back = [&](std::size_t w, std::size_t b, std::span<const T> d_pre) {
      nn::fc_backward<T>(st.hidden, model.param(w).values, d_pre, dh_head, model.param(w).grad, model.param(b).grad);
      for (std::size_t k = 0; k < H; ++k) dh[k] += dh_head[k];
    };
    head_back(M::kHeadXWeight, M::kHeadXBias, g.d_x_hat);
    head_back(M::kHeadAlphaWeight, M::kHeadAlphaBias, d_pre_alpha);
    head_back(M::kHeadBetaWeight, M::kHeadBetaBias, d_pre_beta);

    // GRU.
    nn::gru_backward<T>(gru, st.gru, trace.recurrent_mask, dh, d_obs, dh_prev, gru_grads);
    dh_next = dh_prev;

    // FC + ELU, then the dropout mask.
    nn::elu_backward<T>(st.observation, d_obs, d_obs);
    nn::fc_backward<T>(st.fc_input, model.param(M::kFcWeight).values, d_obs, d_fc_input,
                       model.param(M::kFcWeight).grad, model.param(M::kFcBias).grad);
    if (!st.fc_mask.empty()) {
      for (std::size_t i = 0; i < d_fc_input.size(); ++i) d_fc_input[i] *= st.fc_mask[i];
    }

    // Conv branches.
    std::size_t offset = 0;
    for (int b = 0; b < 2; ++b) {
      const auto& outs = st.conv.outputs[static_cast<std::size_t>(b)];
      const std::size_t n = model.branch_features(b);
      std::vector<T> d_out(d_fc_input.begin() + static_cast<std::ptrdiff_t>(offset),
                           d_fc_input.begin() + static_cast<std::ptrdiff_t>(offset + n));
      offset += n;
      for (int l = 3; l >= 0; --l) {
        const auto& geo = model.geometry(b, l);
        const auto& y = outs[static_cast<std::size_t>(l)];
        nn::elu_backward<T>(y, d_out, d_out);
        std::span<const T> input = l == 0 ? (b == 0 ? st.conv.rd : st.conv.ra)
                                          : std::span<const T>(outs[static_cast<std::size_t>(l - 1)]);
        std::vector<T> d_in(l == 0 ? 0 : geo.input_size());
        nn::conv2d_backward<T>(geo, input, model.conv_kernel(b, l).values, d_out, d_in,
                               model.conv_kernel(b, l).grad, model.conv_bias(b, l).grad);
        d_out = std::move(d_in);
      }
    }
  }
}

template <typename T>
StreamState<T> make_stream_state(const MlCrnnModel<T>& model, int replicas, nn::Mode mode,
                                 std::uint64_t seed) {
  if (replicas < 1) throw InvalidSpec("stream_step: need at least one replica");
  const auto H = static_cast<std::size_t>(model.config().hidden);
  StreamState<T> s;
  s.mode = mode;
  for (int r = 0; r < replicas; ++r) {
    s.hidden.emplace_back(H, T(0));
    s.rngs.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(r)));
    if (mode == nn::Mode::eval) {
      s.recurrent_masks.emplace_back();
    } else {
      s.recurrent_masks.push_back(
          nn::dropout_mask<T>(H, model.config().recurrent_dropout, mode, s.rngs.back()));
    }
  }
  return s;
}

template <typename T>
std::vector<HeadOutputs<T>> stream_step(const MlCrnnModel<T>& model, StreamState<T>& state,
                                        const FrameView<T>& frame) {
  if (state.replicas() < 1) throw InvalidSpec("stream_step: need at least one replica");
  const std::vector<T> features = conv_features(model, frame);
  std::vector<HeadOutputs<T>> out;
  out.reserve(state.replicas());
  StepTrace<T> st;
  for (std::size_t r = 0; r < state.replicas(); ++r) {
    st.features = features;
    st.fc_mask.clear();
    if (state.mode != nn::Mode::eval) {
      st.fc_mask = nn::dropout_mask<T>(features.size(), model.config().fc_dropout, state.mode, state.rngs[r]);
    }
    recurrent_step(model, std::span<const T>(state.hidden[r]), std::span<const T>(state.recurrent_masks[r]), st);
    state.hidden[r] = st.hidden;
    out.push_back(st.heads);
  }
  ++state.frame_index;
  return out;
}

#define RADARTRACK_INSTANTIATE_MLCRNN(T)                                                           \
  template class MlCrnnModel<T>;                                                                   \
  template std::size_t count_parameters<T>(const MlCrnnModel<T>&);                                 \
  template std::vector<T> conv_features<T>(const MlCrnnModel<T>&, const FrameView<T>&,             \
                                           ConvTrace<T>*);                                         \
  template std::vector<T> conv_block<T>(const MlCrnnModel<T>&, const FrameView<T>&, nn::Mode,      \
                                        std::uint64_t);                                            \
  template std::vector<HeadOutputs<T>> forward_sequence<T>(                                        \
      const MlCrnnModel<T>&, std::span<const FrameView<T>>, nn::Mode, std::uint64_t,               \
      SequenceTrace<T>*, std::span<const T>);                                                      \
  template void backward_sequence<T>(MlCrnnModel<T>&, const SequenceTrace<T>&,                     \
                                     std::span<const HeadGradient<T>>);                            \
  template StreamState<T> make_stream_state<T>(const MlCrnnModel<T>&, int, nn::Mode,               \
                                               std::uint64_t);                                     \
  template std::vector<HeadOutputs<T>> stream_step<T>(const MlCrnnModel<T>&, StreamState<T>&,      \
                                                      const FrameView<T>&);

RADARTRACK_INSTANTIATE_MLCRNN(float)
RADARTRACK_INSTANTIATE_MLCRNN(double)

}  // namespace radartrack::mlcrnn
