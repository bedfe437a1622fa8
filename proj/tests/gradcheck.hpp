#pragma once

// Central finite-difference gradient checks shared by the unit tests and the
// acceptance binary. Everything here runs in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "radartrack/mlcrnn.hpp"
#include "radartrack/nn/ops.hpp"
#include "radartrack/training.hpp"
#include "radartrack/uncertainty.hpp"

namespace gradcheck {

/// A differentiable input: its values and the analytic gradient of the
/// scalar loss with respect to them.
struct Slot {
  std::vector<double>* values;
  const std::vector<double>* analytic;
};

struct Result {
  std::string name;
  int probes = 0;
  double max_rel_error = 0.0;
};

inline constexpr double kStep = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
inline constexpr double kScaleFloor = 1e-3;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kScaleFloor});
}

/// Perturbs `probes` random coordinates across all slots by +-kStep and
/// compares the central difference of `loss` to the analytic gradient.
inline Result check(const std::string& name, std::vector<Slot> slots, const std::function<double()>& loss,
                    int probes, std::uint64_t seed) {
  Result r{name, 0, 0.0};
  std::size_t total = 0;
  for (const auto& s : slots) total += s.values->size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int p = 0; p < probes; ++p) {
    std::size_t k = pick(rng);
    std::size_t slot = 0;
    while (k >= slots[slot].values->size()) k -= slots[slot++].values->size();
    double& v = (*slots[slot].values)[k];
    const double saved = v;
    v = saved + kStep;
    const double up = loss();
    v = saved - kStep;
    const double down = loss();
    v = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    r.max_rel_error = std::max(r.max_rel_error, relative_error((*slots[slot].analytic)[k], numeric));
    ++r.probes;
  }
  return r;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

namespace nn = radartrack::nn;

inline Result conv2d_check(int h, int w, int ci, int co, int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto g = nn::conv2d_geometry(h, w, ci, co);
  auto x = random_vector(g.input_size(), rng);
  auto k = random_vector(g.kernel_size(), rng);
  auto b = random_vector(static_cast<std::size_t>(co), rng);
  const auto wts = random_vector(g.output_size(), rng);
  std::vector<double> y(g.output_size());
  auto loss = [&] {
    nn::conv2d_forward<double>(g, x, k, b, y);
    return dot(y, wts);
  };
  std::vector<double> dx(x.size()), dk(k.size(), 0.0), db(b.size(), 0.0);
  nn::conv2d_backward<double>(g, x, k, wts, dx, dk, db);
  return check("conv2d " + std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(ci) + "->" +
                   std::to_string(co),
               {{&x, &dx}, {&k, &dk}, {&b, &db}}, loss, probes, seed + 1);
}

inline Result elu_check(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto x = random_vector(256, rng, -3.0, 3.0);
  for (auto& v : x) {
    if (std::abs(v) < 1e-3) v = 0.5;  // keep probes off the kink
  }
  const auto wts = random_vector(x.size(), rng);
  std::vector<double> y(x.size()), dx(x.size());
  auto loss = [&] {
    nn::elu_forward<double>(x, y);
    return dot(y, wts);
  };
  loss();
  nn::elu_backward<double>(y, wts, dx);
  return check("elu", {{&x, &dx}}, loss, probes, seed + 1);
}

inline Result fc_check(int n, int m, int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto x = random_vector(static_cast<std::size_t>(n), rng);
  auto W = random_vector(static_cast<std::size_t>(n) * m, rng);
  auto b = random_vector(static_cast<std::size_t>(m), rng);
  const auto wts = random_vector(static_cast<std::size_t>(m), rng);
  std::vector<double> y(static_cast<std::size_t>(m));
  auto loss = [&] {
    nn::fc_forward<double>(x, W, b, y);
    return dot(y, wts);
  };
  std::vector<double> dx(x.size()), dW(W.size(), 0.0), db(b.size(), 0.0);
  nn::fc_backward<double>(x, W, wts, dx, dW, db);
  return check("fully_connected", {{&x, &dx}, {&W, &dW}, {&b, &db}}, loss, probes, seed + 1);
}

inline Result gru_check(int in, int hidden, bool with_mask, int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto I = static_cast<std::size_t>(in), H = static_cast<std::size_t>(hidden);
  auto x = random_vector(I, rng);
  auto h = random_vector(H, rng);
  auto W = random_vector(3 * H * I, rng, -0.5, 0.5);
  auto U = random_vector(3 * H * H, rng, -0.5, 0.5);
  auto b = random_vector(3 * H, rng, -0.5, 0.5);
  std::vector<double> mask;
  if (with_mask) mask = nn::dropout_mask<double>(H, 0.33, nn::Mode::train, rng);
  const auto wts = random_vector(H, rng);
  std::vector<double> h_new(H);
  nn::GruCache<double> cache;
  auto view = [&] { return nn::GruView<double>{W, U, b, in, hidden}; };
  auto loss = [&] {
    nn::gru_forward<double>(view(), x, h, mask, h_new, cache);
    return dot(h_new, wts);
  };
  loss();
  std::vector<double> dx(I), dh(H), dW(W.size(), 0.0), dU(U.size(), 0.0), db(b.size(), 0.0);
  nn::gru_backward<double>(view(), cache, mask, wts, dx, dh, nn::GruGrads<double>{dW, dU, db});
  return check(with_mask ? "gru (recurrent mask)" : "gru", {{&x, &dx}, {&h, &dh}, {&W, &dW}, {&U, &dU}, {&b, &db}},
               loss, probes, seed + 1);
}

inline Result dropout_check(int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto x = random_vector(500, rng);
  const auto mask = nn::dropout_mask<double>(x.size(), 0.33, nn::Mode::train, rng);
  const auto wts = random_vector(x.size(), rng);
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * mask[i] * wts[i];
    return s;
  };
  std::vector<double> dx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = mask[i] * wts[i];
  return check("dropout", {{&x, &dx}}, loss, probes, seed + 1);
}

/// NLL of the Cholesky-parameterized Gaussian with respect to x_hat,
/// alpha and beta.
inline Result nll_check(int probes, std::uint64_t seed) {
  namespace u = radartrack::uncertainty;
  std::mt19937_64 rng(seed);
  Result worst{"nll through Cholesky", 0, 0.0};
  const int cases = 10;
  for (int c = 0; c < cases; ++c) {
    auto x = random_vector(4, rng, -1.0, 1.0);
    auto x_hat = random_vector(4, rng, -1.0, 1.0);
    auto alpha = random_vector(4, rng, 0.3, 1.5);
    auto beta = random_vector(6, rng, -0.9, 0.9);
    auto loss = [&] {
      u::Vec4 a = Eigen::Map<const u::Vec4>(alpha.data());
      u::Vec6 bt = Eigen::Map<const u::Vec6>(beta.data());
      const auto cov = u::build_covariance(a, bt);
      return u::gaussian_nll(Eigen::Map<const u::Vec4>(x.data()), Eigen::Map<const u::Vec4>(x_hat.data()),
                             cov.factor);
    };
    const auto g = u::gaussian_nll_with_grad(Eigen::Map<const u::Vec4>(x.data()),
                                             Eigen::Map<const u::Vec4>(x_hat.data()),
                                             Eigen::Map<const u::Vec4>(alpha.data()),
                                             Eigen::Map<const u::Vec6>(beta.data()));
    std::vector<double> dxh(g.d_x_hat.data(), g.d_x_hat.data() + 4);
    std::vector<double> da(g.d_alpha.data(), g.d_alpha.data() + 4);
    std::vector<double> dbt(g.d_beta.data(), g.d_beta.data() + 6);
    const auto r = check("", {{&x_hat, &dxh}, {&alpha, &da}, {&beta, &dbt}}, loss, probes / cases,
                         seed + 100 + static_cast<std::uint64_t>(c));
    worst.probes += r.probes;
    worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
  }
  return worst;
}

/// End to end: window NLL of a downsized network through heads, GRU, FC,
/// dropout and both conv branches, with respect to every parameter tensor.
inline Result model_check(int probes, std::uint64_t seed, radartrack::training::Loss loss_kind) {
  namespace m = radartrack::mlcrnn;
  m::ModelConfig config;
  config.input_h = 9;
  config.rd_w = 8;
  config.ra_w = 6;
  config.channels = {2, 3, 2, 2};
  config.obs_dim = 5;
  config.hidden = 7;
  m::MlCrnnModel<double> model(config);
  model.initialize(seed);
  std::mt19937_64 rng(seed + 1);
  // Non-zero biases so no gradient is structurally trivial.
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    for (auto& v : model.param(i).values) v += 0.1 * std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  const int T = 4;
  std::vector<std::vector<double>> rd(T), ra(T);
  std::vector<m::FrameView<double>> frames;
  std::vector<radartrack::State> truth(T);
  for (int t = 0; t < T; ++t) {
    rd[t] = random_vector(static_cast<std::size_t>(config.input_h * config.rd_w), rng, 0.0, 1.0);
    ra[t] = random_vector(static_cast<std::size_t>(config.input_h * config.ra_w), rng, 0.0, 1.0);
    for (auto& v : truth[t]) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  for (int t = 0; t < T; ++t) frames.push_back({rd[t], ra[t]});

  const std::uint64_t mask_seed = seed + 2;
  auto loss = [&] {
    const auto heads = m::forward_sequence<double>(model, frames, radartrack::nn::Mode::train, mask_seed);
    return radartrack::training::window_loss<double>(heads, truth, loss_kind, 1.0, nullptr);
  };
  model.zero_grad();
  m::SequenceTrace<double> trace;
  const auto heads = m::forward_sequence<double>(model, frames, radartrack::nn::Mode::train, mask_seed, &trace);
  std::vector<m::HeadGradient<double>> d_heads;
  radartrack::training::window_loss<double>(heads, truth, loss_kind, 1.0, &d_heads);
  m::backward_sequence<double>(model, trace, d_heads);

  std::vector<Slot> slots;
  for (auto& p : model.parameters()) slots.push_back({&p.values, &p.grad});
  return check(std::string("network window loss (") + radartrack::training::to_string(loss_kind) + ")", slots, loss,
               probes, seed + 3);
}

/// Every check required for gradient integrity, 100 probes each.
inline std::vector<Result> all_checks(std::uint64_t seed) {
  std::vector<Result> out;
  out.push_back(conv2d_check(9, 8, 1, 4, 100, seed + 1));
  out.push_back(conv2d_check(7, 5, 4, 8, 100, seed + 2));
  out.push_back(conv2d_check(6, 6, 3, 2, 100, seed + 3));
  out.push_back(elu_check(100, seed + 4));
  out.push_back(fc_check(20, 16, 100, seed + 5));
  out.push_back(gru_check(6, 9, false, 100, seed + 6));
  out.push_back(gru_check(6, 9, true, 100, seed + 7));
  out.push_back(dropout_check(100, seed + 8));
  out.push_back(nll_check(100, seed + 9));
  out.push_back(model_check(100, seed + 10, radartrack::training::Loss::ml));
  out.push_back(model_check(100, seed + 11, radartrack::training::Loss::mse));
  return out;
}

}  // namespace gradcheck
