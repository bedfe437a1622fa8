#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "radartrack/nn/tensor.hpp"

namespace radartrack::nn {

// Every op comes as a forward function and a backward function. Backward
// functions *accumulate* into parameter gradients (so a mini-batch can be
// summed) and *overwrite* input gradients. Activations are HWC, channels
// fastest.

/// Geometry of a 3x3, stride-2 convolution with "same" zero padding: the
/// output is ceil(H/2) x ceil(W/2); when the total padding along an axis is
/// odd the extra zero row/column goes at the bottom/right.
struct Conv2dGeometry {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  int pad_top = 0, pad_left = 0;

  std::size_t input_size() const { return static_cast<std::size_t>(in_h) * in_w * in_c; }
  std::size_t output_size() const { return static_cast<std::size_t>(out_h) * out_w * out_c; }
  std::size_t kernel_size() const { return static_cast<std::size_t>(9) * in_c * out_c; }
};

Conv2dGeometry conv2d_geometry(int in_h, int in_w, int in_c, int out_c);

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> kernels,
                    std::span<const T> bias, std::span<T> output);

/// `d_input` may be empty when the input gradient is not needed.
template <typename T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> kernels,
                     std::span<const T> d_output, std::span<T> d_input, std::span<T> d_kernels,
                     std::span<T> d_bias);

/// Tensor form: input H x W x C_in, kernels 3 x 3 x C_in x C_out, bias C_out.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias);

/// y = x for x > 0, e^x - 1 otherwise.
template <typename T>
void elu_forward(std::span<const T> x, std::span<T> y);
/// Uses the forward output: dy/dx = 1 for y > 0, y + 1 otherwise.
template <typename T>
void elu_backward(std::span<const T> y, std::span<const T> d_y, std::span<T> d_x);

template <typename T>
Tensor<T> elu(const Tensor<T>& x);

/// y = W x + b with W stored m x n row-major.
template <typename T>
void fc_forward(std::span<const T> x, std::span<const T> weights, std::span<const T> bias,
                std::span<T> y);
/// `d_x` may be empty.
template <typename T>
void fc_backward(std::span<const T> x, std::span<const T> weights, std::span<const T> d_y,
                 std::span<T> d_x, std::span<T> d_weights, std::span<T> d_bias);

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias);

/// GRU parameters, gate blocks stacked in the order (update z, reset r,
/// candidate n): W is 3H x I, U is 3H x H, b is 3H (one bias per gate).
///
///   hm = h * mask                      (recurrent dropout; mask may be empty)
///   z  = sigmoid(W_z x + U_z hm + b_z)
///   r  = sigmoid(W_r x + U_r hm + b_r)
///   n  = tanh(W_n x + U_n (r * hm) + b_n)
///   h' = (1 - z) * h + z * n
template <typename T>
struct GruView {
  std::span<const T> w;
  std::span<const T> u;
  std::span<const T> b;
  int input = 0;
  int hidden = 0;
};

template <typename T>
struct GruGrads {
  std::span<T> w;
  std::span<T> u;
  std::span<T> b;
};

/// Values saved by gru_forward for the backward pass.
template <typename T>
struct GruCache {
  std::vector<T> x, h, hm, rh, z, r, n;
};

template <typename T>
void gru_forward(const GruView<T>& p, std::span<const T> x, std::span<const T> h,
                 std::span<const T> mask, std::span<T> h_new, GruCache<T>& cache);

/// `d_x` may be empty.
template <typename T>
void gru_backward(const GruView<T>& p, const GruCache<T>& cache, std::span<const T> mask,
                  std::span<const T> d_h_new, std::span<T> d_x, std::span<T> d_h,
                  const GruGrads<T>& grads);

enum class Mode { train, mc, eval };

/// Inverted-dropout mask: each entry is 0 with probability p and 1/(1-p)
/// otherwise; all ones in eval mode or when p == 0. Throws InvalidSpec unless
/// 0 <= p < 1.
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double p, Mode mode, std::mt19937_64& rng);

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, std::uint64_t seed);

}  // namespace radartrack::nn
