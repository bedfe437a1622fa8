#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "radartrack/nn/tensor.hpp"

namespace radartrack::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// Zero moments shaped like `params`.
template <typename T>
AdamState<T> make_adam_state(std::span<Tensor<T>* const> params, AdamConfig config = {});

/// One bias-corrected Adam update using each parameter's `grad`. Throws
/// NumericError and leaves parameters and state untouched when any gradient
/// entry is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state);

}  // namespace radartrack::nn
