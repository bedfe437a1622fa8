#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "radartrack/nn/ops.hpp"

namespace radartrack::nn {

namespace {

template <typename T>
T sigmoid(T a) {
  return T(1) / (T(1) + std::exp(-a));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

int same_pad_before(int in, int out) {
  const int total = std::max((out - 1) * 2 + 3 - in, 0);
  return total / 2;
}

}  // namespace

Conv2dGeometry conv2d_geometry(int in_h, int in_w, int in_c, int out_c) {
  require(in_h > 0 && in_w > 0 && in_c > 0 && out_c > 0, "conv2d: dimensions must be positive");
  Conv2dGeometry g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.out_c = out_c;
  g.out_h = (in_h + 1) / 2;
  g.out_w = (in_w + 1) / 2;
  g.pad_top = same_pad_before(in_h, g.out_h);
  g.pad_left = same_pad_before(in_w, g.out_w);
  return g;
}

// Direct loops with compile-time channel counts, used for the thin first
// layers of the tracker.
template <typename T, int CI, int CO>
void conv_forward_fixed(const Conv2dGeometry& g, const T* input, const T* kernels, const T* bias, T* output) {
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      T acc[CO];
      for (int co = 0; co < CO; ++co) acc[co] = bias[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * 2 - g.pad_top + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * 2 - g.pad_left + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          const T* in = input + (static_cast<std::size_t>(iy) * g.in_w + ix) * CI;
          const T* k = kernels + (ky * 3 + kx) * CI * CO;
          for (int ci = 0; ci < CI; ++ci) {
            const T v = in[ci];
            for (int co = 0; co < CO; ++co) acc[co] += v * k[ci * CO + co];
          }
        }
      }
      T* out = output + (static_cast<std::size_t>(oy) * g.out_w + ox) * CO;
      for (int co = 0; co < CO; ++co) out[co] = acc[co];
    }
  }
}

template <typename T, int CI, int CO>
void conv_backward_fixed(const Conv2dGeometry& g, const T* input, const T* kernels, const T* d_output, T* d_input,
                         T* d_kernels, T* d_bias) {
  T dk[9 * CI * CO] = {};
  T db[CO] = {};
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const T* d = d_output + (static_cast<std::size_t>(oy) * g.out_w + ox) * CO;
      for (int co = 0; co < CO; ++co) db[co] += d[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * 2 - g.pad_top + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * 2 - g.pad_left + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          const std::size_t in_off = (static_cast<std::size_t>(iy) * g.in_w + ix) * CI;
          const int k_off = (ky * 3 + kx) * CI * CO;
          const T* in = input + in_off;
          for (int ci = 0; ci < CI; ++ci) {
            const T v = in[ci];
            for (int co = 0; co < CO; ++co) dk[k_off + ci * CO + co] += v * d[co];
          }
          if (d_input) {
            const T* k = kernels + k_off;
            T* di = d_input + in_off;
            for (int ci = 0; ci < CI; ++ci) {
              T acc = 0;
              for (int co = 0; co < CO; ++co) acc += k[ci * CO + co] * d[co];
              di[ci] += acc;
            }
          }
        }
      }
    }
  }
  for (int i = 0; i < 9 * CI * CO; ++i) d_kernels[i] += dk[i];
  for (int co = 0; co < CO; ++co) d_bias[co] += db[co];
}

// Other shapes: convolution as a matrix product. Every output pixel becomes
// a row of 9 * C_in input values (zero where the window hits the padding),
// ordered like the kernel rows, so output = patches * kernels.
template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void im2col(const Conv2dGeometry& g, std::span<const T> input, RowMatrix<T>& cols) {
  const int ci_n = g.in_c;
  cols.resize(static_cast<Eigen::Index>(g.out_h) * g.out_w, 9 * ci_n);
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      T* row = cols.row(static_cast<Eigen::Index>(oy) * g.out_w + ox).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * 2 - g.pad_top + ky;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * 2 - g.pad_left + kx;
          T* dst = row + (ky * 3 + kx) * ci_n;
          if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
            std::fill(dst, dst + ci_n, T(0));
          } else {
            const T* src = &input[(static_cast<std::size_t>(iy) * g.in_w + ix) * ci_n];
            std::copy(src, src + ci_n, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const Conv2dGeometry& g, const RowMatrix<T>& cols, std::span<T> d_input) {
  const int ci_n = g.in_c;
  for (int oy = 0; oy < g.out_h; ++oy) {
    for (int ox = 0; ox < g.out_w; ++ox) {
      const T* row = cols.row(static_cast<Eigen::Index>(oy) * g.out_w + ox).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = oy * 2 - g.pad_top + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = ox * 2 - g.pad_left + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          const T* src = row + (ky * 3 + kx) * ci_n;
          T* dst = &d_input[(static_cast<std::size_t>(iy) * g.in_w + ix) * ci_n];
          for (int c = 0; c < ci_n; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

// Shapes where the direct loops beat the matrix-product path.
#define RADARTRACK_FIXED_FORWARD(X) X(1, 4) X(4, 8)
#define RADARTRACK_FIXED_BACKWARD(X) X(1, 4)

template <typename T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> kernels,
                    std::span<const T> bias, std::span<T> output) {
#define RADARTRACK_FWD(CI, CO)                                                                          \
  if (g.in_c == CI && g.out_c == CO) {                                                                  \
    conv_forward_fixed<T, CI, CO>(g, input.data(), kernels.data(), bias.data(), output.data());         \
    return;                                                                                             \
  }
  RADARTRACK_FIXED_FORWARD(RADARTRACK_FWD)
#undef RADARTRACK_FWD
  thread_local RowMatrix<T> cols;
  im2col(g, input, cols);
  const Eigen::Map<const RowMatrix<T>> K(kernels.data(), 9 * g.in_c, g.out_c);
  Eigen::Map<RowMatrix<T>> out(output.data(), cols.rows(), g.out_c);
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), g.out_c);
  out.noalias() = cols * K;
  out.rowwise() += b;
}

template <typename T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> input, std::span<const T> kernels,
                     std::span<const T> d_output, std::span<T> d_input, std::span<T> d_kernels,
                     std::span<T> d_bias) {
  if (!d_input.empty()) std::fill(d_input.begin(), d_input.end(), T(0));
#define RADARTRACK_BWD(CI, CO)                                                                          \
  if (g.in_c == CI && g.out_c == CO) {                                                                  \
    conv_backward_fixed<T, CI, CO>(g, input.data(), kernels.data(), d_output.data(),                    \
                                   d_input.empty() ? nullptr : d_input.data(), d_kernels.data(),        \
                                   d_bias.data());                                                      \
    return;                                                                                             \
  }
  RADARTRACK_FIXED_BACKWARD(RADARTRACK_BWD)
#undef RADARTRACK_BWD
  thread_local RowMatrix<T> cols;
  im2col(g, input, cols);
  const Eigen::Map<const RowMatrix<T>> d_out(d_output.data(), cols.rows(), g.out_c);
  Eigen::Map<RowMatrix<T>> dK(d_kernels.data(), 9 * g.in_c, g.out_c);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(d_bias.data(), g.out_c);
  dK.noalias() += cols.transpose() * d_out;
  db += d_out.colwise().sum();
  if (!d_input.empty()) {
    const Eigen::Map<const RowMatrix<T>> K(kernels.data(), 9 * g.in_c, g.out_c);
    cols.noalias() = d_out * K.transpose();
    col2im_add(g, cols, d_input);
  }
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  require(input.rank() == 3, "conv2d: input must be H x W x C, got " + shape_string(input.shape));
  require(kernels.rank() == 4 && kernels.dim(0) == 3 && kernels.dim(1) == 3,
          "conv2d: kernels must be 3 x 3 x C_in x C_out, got " + shape_string(kernels.shape));
  require(kernels.dim(2) == input.dim(2), "conv2d: channel mismatch between input and kernels");
  require(bias.rank() == 1 && bias.dim(0) == kernels.dim(3), "conv2d: bias must have C_out entries");
  const auto g = conv2d_geometry(static_cast<int>(input.dim(0)), static_cast<int>(input.dim(1)),
                                 static_cast<int>(input.dim(2)), static_cast<int>(kernels.dim(3)));
  Tensor<T> out({static_cast<std::size_t>(g.out_h), static_cast<std::size_t>(g.out_w),
                 static_cast<std::size_t>(g.out_c)});
  conv2d_forward<T>(g, input.values, kernels.values, bias.values, out.values);
  return out;
}

template <typename T>
void elu_forward(std::span<const T> x, std::span<T> y) {
  const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> xs(x.data(), static_cast<Eigen::Index>(x.size()));
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> ys(y.data(), static_cast<Eigen::Index>(y.size()));
  ys = (xs > T(0)).select(xs, xs.min(T(0)).expm1());
}

template <typename T>
void elu_backward(std::span<const T> y, std::span<const T> d_y, std::span<T> d_x) {
  for (std::size_t i = 0; i < y.size(); ++i) d_x[i] = y[i] > T(0) ? d_y[i] : d_y[i] * (y[i] + T(1));
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  elu_forward<T>(x.values, y.values);
  return y;
}

template <typename T>
void fc_forward(std::span<const T> x, std::span<const T> weights, std::span<const T> bias,
                std::span<T> y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T* w = &weights[i * n];
    T acc = bias[i];
    for (std::size_t j = 0; j < n; ++j) acc += w[j] * x[j];
    y[i] = acc;
  }
}

template <typename T>
void fc_backward(std::span<const T> x, std::span<const T> weights, std::span<const T> d_y,
                 std::span<T> d_x, std::span<T> d_weights, std::span<T> d_bias) {
  const std::size_t n = x.size();
  const bool want_input = !d_x.empty();
  if (want_input) std::fill(d_x.begin(), d_x.end(), T(0));
  for (std::size_t i = 0; i < d_y.size(); ++i) {
    const T g = d_y[i];
    d_bias[i] += g;
    T* dw = &d_weights[i * n];
    for (std::size_t j = 0; j < n; ++j) dw[j] += g * x[j];
    if (want_input) {
      const T* w = &weights[i * n];
      for (std::size_t j = 0; j < n; ++j) d_x[j] += g * w[j];
    }
  }
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(x.rank() == 1, "fully_connected: input must be a vector");
  require(weights.rank() == 2 && weights.dim(1) == x.dim(0),
          "fully_connected: weights must be m x n with n = input size");
  require(bias.rank() == 1 && bias.dim(0) == weights.dim(0), "fully_connected: bias must have m entries");
  Tensor<T> y({weights.dim(0)});
  fc_forward<T>(x.values, weights.values, bias.values, y.values);
  return y;
}

template <typename T>
void gru_forward(const GruView<T>& p, std::span<const T> x, std::span<const T> h,
                 std::span<const T> mask, std::span<T> h_new, GruCache<T>& c) {
  const std::size_t I = static_cast<std::size_t>(p.input);
  const std::size_t H = static_cast<std::size_t>(p.hidden);
  require(x.size() == I && h.size() == H && h_new.size() == H, "gru: dimension mismatch");
  require(mask.empty() || mask.size() == H, "gru: recurrent mask must have H entries");
  c.x.assign(x.begin(), x.end());
  c.h.assign(h.begin(), h.end());
  c.hm.resize(H);
  for (std::size_t k = 0; k < H; ++k) c.hm[k] = mask.empty() ? h[k] : h[k] * mask[k];
  c.z.resize(H);
  c.r.resize(H);
  c.n.resize(H);
  c.rh.resize(H);

  // Gate pre-activations for z and r.
  for (std::size_t gate = 0; gate < 2; ++gate) {
    auto& out = gate == 0 ? c.z : c.r;
    for (std::size_t k = 0; k < H; ++k) {
      const std::size_t row = gate * H + k;
      const T* w = &p.w[row * I];
      const T* u = &p.u[row * H];
      T a = p.b[row];
      for (std::size_t j = 0; j < I; ++j) a += w[j] * x[j];
      for (std::size_t j = 0; j < H; ++j) a += u[j] * c.hm[j];
      out[k] = sigmoid(a);
    }
  }
  for (std::size_t k = 0; k < H; ++k) c.rh[k] = c.r[k] * c.hm[k];
  for (std::size_t k = 0; k < H; ++k) {
    const std::size_t row = 2 * H + k;
    const T* w = &p.w[row * I];
    const T* u = &p.u[row * H];
    T a = p.b[row];
    for (std::size_t j = 0; j < I; ++j) a += w[j] * x[j];
    for (std::size_t j = 0; j < H; ++j) a += u[j] * c.rh[j];
    c.n[k] = std::tanh(a);
  }
  for (std::size_t k = 0; k < H; ++k) h_new[k] = (T(1) - c.z[k]) * h[k] + c.z[k] * c.n[k];
}

template <typename T>
void gru_backward(const GruView<T>& p, const GruCache<T>& c, std::span<const T> mask,
                  std::span<const T> d_h_new, std::span<T> d_x, std::span<T> d_h,
                  const GruGrads<T>& grads) {
  const std::size_t I = static_cast<std::size_t>(p.input);
  const std::size_t H = static_cast<std::size_t>(p.hidden);
  std::vector<T> da(3 * H);
  T* da_z = da.data();
  T* da_r = da.data() + H;
  T* da_n = da.data() + 2 * H;
  for (std::size_t k = 0; k < H; ++k) {
    const T dn = d_h_new[k] * c.z[k];
    const T dz = d_h_new[k] * (c.n[k] - c.h[k]);
    da_n[k] = dn * (T(1) - c.n[k] * c.n[k]);
    da_z[k] = dz * c.z[k] * (T(1) - c.z[k]);
  }
  // Through U_n (r * hm).
  std::vector<T> d_rh(H, T(0));
  for (std::size_t k = 0; k < H; ++k) {
    const T g = da_n[k];
    const T* u = &p.u[(2 * H + k) * H];
    for (std::size_t j = 0; j < H; ++j) d_rh[j] += g * u[j];
  }
  std::vector<T> d_hm(H);
  for (std::size_t j = 0; j < H; ++j) {
    d_hm[j] = d_rh[j] * c.r[j];
    da_r[j] = d_rh[j] * c.hm[j] * c.r[j] * (T(1) - c.r[j]);
  }
  for (std::size_t gate = 0; gate < 2; ++gate) {
    const T* dag = gate == 0 ? da_z : da_r;
    for (std::size_t k = 0; k < H; ++k) {
      const T g = dag[k];
      const T* u = &p.u[(gate * H + k) * H];
      for (std::size_t j = 0; j < H; ++j) d_hm[j] += g * u[j];
    }
  }
  for (std::size_t j = 0; j < H; ++j) {
    const T via_mask = mask.empty() ? d_hm[j] : d_hm[j] * mask[j];
    d_h[j] = d_h_new[j] * (T(1) - c.z[j]) + via_mask;
  }

  const bool want_input = !d_x.empty();
  if (want_input) std::fill(d_x.begin(), d_x.end(), T(0));
  for (std::size_t row = 0; row < 3 * H; ++row) {
    const T g = da[row];
    grads.b[row] += g;
    T* dw = &grads.w[row * I];
    for (std::size_t j = 0; j < I; ++j) dw[j] += g * c.x[j];
    const std::vector<T>& rec = row < 2 * H ? c.hm : c.rh;
    T* du = &grads.u[row * H];
    for (std::size_t j = 0; j < H; ++j) du[j] += g * rec[j];
    if (want_input) {
      const T* w = &p.w[row * I];
      for (std::size_t j = 0; j < I; ++j) d_x[j] += g * w[j];
    }
  }
}

template <typename T>
std::vector<T> dropout_mask(std::size_t n, double p, Mode mode, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidSpec("dropout probability must lie in [0, 1)");
  std::vector<T> mask(n, T(1));
  if (mode == Mode::eval || p == 0.0) return mask;
  std::bernoulli_distribution drop(p);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = drop(rng) ? T(0) : keep_scale;
  return mask;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto mask = dropout_mask<T>(x.size(), p, mode, rng);
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

#define RADARTRACK_INSTANTIATE_OPS(T)                                                              \
  template void conv2d_forward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,    \
                                  std::span<const T>, std::span<T>);                                \
  template void conv2d_backward<T>(const Conv2dGeometry&, std::span<const T>, std::span<const T>,   \
                                   std::span<const T>, std::span<T>, std::span<T>, std::span<T>);   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template void elu_forward<T>(std::span<const T>, std::span<T>);                                   \
  template void elu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);              \
  template Tensor<T> elu<T>(const Tensor<T>&);                                                      \
  template void fc_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,           \
                              std::span<T>);                                                        \
  template void fc_backward<T>(std::span<const T>, std::span<const T>, std::span<const T>,          \
                               std::span<T>, std::span<T>, std::span<T>);                           \
  template Tensor<T> fully_connected<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template void gru_forward<T>(const GruView<T>&, std::span<const T>, std::span<const T>,           \
                               std::span<const T>, std::span<T>, GruCache<T>&);                     \
  template void gru_backward<T>(const GruView<T>&, const GruCache<T>&, std::span<const T>,          \
                                std::span<const T>, std::span<T>, std::span<T>,                     \
                                const GruGrads<T>&);                                                \
  template std::vector<T> dropout_mask<T>(std::size_t, double, Mode, std::mt19937_64&);             \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Mode, std::uint64_t);

RADARTRACK_INSTANTIATE_OPS(float)
RADARTRACK_INSTANTIATE_OPS(double)

}  // namespace radartrack::nn
