#include "radartrack/nn/adam.hpp"

#include <cmath>

namespace radartrack::nn {

template <typename T>
AdamState<T> make_adam_state(std::span<Tensor<T>* const> params, AdamConfig config) {
  AdamState<T> s;
  s.config = config;
  for (const Tensor<T>* p : params) {
    s.m.emplace_back(p->size(), T(0));
    s.v.emplace_back(p->size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  if (params.size() != state.m.size()) throw ShapeError("adam: parameter list does not match state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& p = *params[i];
    if (!p.has_grad() || p.size() != state.m[i].size()) {
      throw ShapeError("adam: gradient shape does not match parameter " + std::to_string(i));
    }
    for (T g : p.grad) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter " + std::to_string(i));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T g = p.grad[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p.values[k] -= static_cast<T>(c.lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
}

template AdamState<float> make_adam_state<float>(std::span<Tensor<float>* const>, AdamConfig);
template AdamState<double> make_adam_state<double>(std::span<Tensor<double>* const>, AdamConfig);
template void adam_step<float>(std::span<Tensor<float>* const>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>* const>, AdamState<double>&);

}  // namespace radartrack::nn
