#pragma once

// Dense channel-major tensors and the small set of kernels needed to train
// the single-band fusion network: same-size 2-D convolution with replicate
// padding, ReLU, and Adam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rpnn/error.hpp"
#include "rpnn/parallel.hpp"

namespace rpnn {

/// channels x height x width, row-major within each channel plane.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}

  std::size_t channels() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t plane_size() const noexcept { return h_ * w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * h_ + y) * w_ + x]; }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * h_ + y) * w_ + x]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() & noexcept { return data_; }
  std::span<const double> values() const& noexcept { return data_; }
  std::span<const double> values() const&& = delete;
  std::span<double> plane(std::size_t c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(std::size_t c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  /// Copy of a single channel as a 1-channel tensor.
  Tensor channel(std::size_t c) const {
    Tensor out(1, h_, w_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(c * plane_size()), plane_size(), out.data_.begin());
    return out;
  }

  void set_channel(std::size_t c, const Tensor& src) {
    if (src.h_ != h_ || src.w_ != w_ || src.c_ != 1)
      throw ShapeError("set_channel: expected 1x" + std::to_string(h_) + "x" + std::to_string(w_) + ", got " +
                       src.shape_string());
    std::copy(src.data_.begin(), src.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(c * plane_size()));
  }

  bool same_shape(const Tensor& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const {
    return std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.same_shape(b) && a.data_ == b.data_; }

 private:
  std::size_t c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

/// Concatenates tensors with equal spatial size along the channel axis.
inline Tensor concat_channels(std::initializer_list<const Tensor*> parts) {
  std::size_t c = 0;
  const Tensor& first = **parts.begin();
  for (const Tensor* t : parts) {
    if (t->height() != first.height() || t->width() != first.width())
      throw ShapeError("concat_channels: spatial mismatch " + t->shape_string() + " vs " + first.shape_string());
    c += t->channels();
  }
  Tensor out(c, first.height(), first.width());
  double* dst = out.data();
  for (const Tensor* t : parts) dst = std::copy(t->data(), t->data() + t->size(), dst);
  return out;
}

/// Convolution layer: kernel is out_ch x in_ch x k x k, k odd.
struct ConvLayer {
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t k = 1;
  std::vector<double> kernel;
  std::vector<double> bias;

  ConvLayer() = default;
  ConvLayer(std::size_t in, std::size_t out, std::size_t ksize)
      : in_ch(in), out_ch(out), k(ksize), kernel(out * in * ksize * ksize, 0.0), bias(out, 0.0) {
    if (ksize == 0 || ksize % 2 == 0) throw ValueError("ConvLayer: kernel size must be odd, got " + std::to_string(ksize));
  }

  std::size_t radius() const noexcept { return (k - 1) / 2; }
  std::size_t fan_in() const noexcept { return in_ch * k * k; }
  std::size_t parameter_count() const noexcept { return kernel.size() + bias.size(); }

  double& weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return kernel[((o * in_ch + i) * k + ky) * k + kx];
  }
  double weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return kernel[((o * in_ch + i) * k + ky) * k + kx];
  }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ConvGradients {
  Tensor input;  // empty when not requested
  std::vector<double> kernel;
  std::vector<double> bias;
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstPlaneMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

inline std::size_t clamp_index(std::ptrdiff_t v, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

// Output columns [lo, hi) whose source column x + shift lies inside [0, w).
struct ShiftedSpan {
  std::size_t lo, hi;
};

inline ShiftedSpan shifted_span(std::ptrdiff_t shift, std::size_t w) {
  const auto n = static_cast<std::ptrdiff_t>(w);
  const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-shift, 0, n);
  const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(n - shift, lo, n);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Rows of the image processed per im2col tile; keeps the column buffer
// near 16 MB regardless of layer width.
inline std::size_t tile_rows(const ConvLayer& layer, std::size_t height, std::size_t width) {
  constexpr std::size_t budget = std::size_t{1} << 21;
  const std::size_t per_row = std::max<std::size_t>(layer.fan_in() * width, 1);
  return std::clamp<std::size_t>(budget / per_row, 1, height);
}

// cols((i*k + ky)*k + kx, p) = input_i(clamp(y+ky-r), clamp(x+kx-r)), p over rows [y0, y1).
inline void im2col(const Tensor& input, const ConvLayer& layer, std::size_t y0, std::size_t y1, RowMatrix& cols) {
  const std::size_t h = input.height(), w = input.width(), k = layer.k;
  const auto r = static_cast<std::ptrdiff_t>(layer.radius());
  const std::size_t n = (y1 - y0) * w;
  cols.resize(static_cast<Eigen::Index>(layer.fan_in()), static_cast<Eigen::Index>(n));
  parallel_for(static_cast<std::ptrdiff_t>(layer.fan_in()), [&](std::ptrdiff_t row) {
    const std::size_t i = static_cast<std::size_t>(row) / (k * k);
    const auto ky = static_cast<std::ptrdiff_t>((static_cast<std::size_t>(row) / k) % k);
    const auto kx = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(row) % k);
    double* dst = cols.data() + static_cast<std::size_t>(row) * n;
    const auto plane = input.plane(i);
    const auto span = shifted_span(kx - r, w);
    for (std::size_t y = y0; y < y1; ++y) {
      const double* src = plane.data() + clamp_index(static_cast<std::ptrdiff_t>(y) + ky - r, h) * w;
      std::fill_n(dst, span.lo, src[0]);
      std::copy(src + span.lo + (kx - r), src + span.hi + (kx - r), dst + span.lo);
      std::fill(dst + span.hi, dst + w, src[w - 1]);
      dst += w;
    }
  });
}

// Adjoint of im2col: scatters column gradients back through the clamped indices.
inline void col2im_add(const RowMatrix& cols, const ConvLayer& layer, std::size_t y0, std::size_t y1, Tensor& grad) {
  const std::size_t h = grad.height(), w = grad.width(), k = layer.k;
  const auto r = static_cast<std::ptrdiff_t>(layer.radius());
  const std::size_t n = (y1 - y0) * w;
  parallel_for(static_cast<std::ptrdiff_t>(layer.in_ch), [&](std::ptrdiff_t ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto plane = grad.plane(i);
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = cols.data() + ((i * k + ky) * k + kx) * n;
        const auto shift = static_cast<std::ptrdiff_t>(kx) - r;
        const auto span = shifted_span(shift, w);
        for (std::size_t y = y0; y < y1; ++y) {
          double* dst = plane.data() + clamp_index(static_cast<std::ptrdiff_t>(y + ky) - r, h) * w;
          for (std::size_t x = 0; x < span.lo; ++x) dst[0] += src[x];
          double* mid = dst + shift;
          for (std::size_t x = span.lo; x < span.hi; ++x) mid[x] += src[x];
          for (std::size_t x = span.hi; x < w; ++x) dst[w - 1] += src[x];
          src += w;
        }
      }
    }
  });
}

inline void check_conv_input(const Tensor& input, const ConvLayer& layer, const char* op) {
  if (input.channels() != layer.in_ch)
    throw ShapeError(std::string(op) + ": expected " + std::to_string(layer.in_ch) + " input channels, got " +
                     std::to_string(input.channels()));
  if (input.height() == 0 || input.width() == 0) throw ShapeError(std::string(op) + ": empty spatial extent");
}

}  // namespace detail

/// Same-size convolution (cross-correlation) with replicate-edge padding.
inline Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer) {
  detail::check_conv_input(input, layer, "conv2d_forward");
  const std::size_t h = input.height(), w = input.width(), hw = h * w;
  Tensor out(layer.out_ch, h, w);
  const Eigen::Map<const detail::RowMatrix> weights(layer.kernel.data(), static_cast<Eigen::Index>(layer.out_ch),
                                                    static_cast<Eigen::Index>(layer.fan_in()));
  const Eigen::Map<const Eigen::VectorXd> bias(layer.bias.data(), static_cast<Eigen::Index>(layer.out_ch));
  const std::size_t step = detail::tile_rows(layer, h, w);
  detail::RowMatrix cols;
  for (std::size_t y0 = 0; y0 < h; y0 += step) {
    const std::size_t y1 = std::min(h, y0 + step);
    const auto n = static_cast<Eigen::Index>((y1 - y0) * w);
    detail::im2col(input, layer, y0, y1, cols);
    detail::PlaneMap dst(out.data() + y0 * w, static_cast<Eigen::Index>(layer.out_ch), n,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
    dst.noalias() = weights * cols;
    dst.colwise() += bias;
  }
  return out;
}

/// Exact gradients of a scalar loss through conv2d_forward. The input gradient
/// is skipped when `want_input_grad` is false (first layer of a network).
inline ConvGradients conv2d_backward(const Tensor& input, const ConvLayer& layer, const Tensor& grad_out,
                                     bool want_input_grad = true) {
  detail::check_conv_input(input, layer, "conv2d_backward");
  if (grad_out.channels() != layer.out_ch || grad_out.height() != input.height() ||
      grad_out.width() != input.width())
    throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_string() + ", expected " +
                     std::to_string(layer.out_ch) + "x" + std::to_string(input.height()) + "x" +
                     std::to_string(input.width()));
  const std::size_t h = input.height(), w = input.width(), hw = h * w;
  const auto out_ch = static_cast<Eigen::Index>(layer.out_ch);
  const auto fan_in = static_cast<Eigen::Index>(layer.fan_in());

  ConvGradients g;
  g.kernel.assign(layer.kernel.size(), 0.0);
  g.bias.assign(layer.out_ch, 0.0);
  if (want_input_grad) g.input = Tensor(input.channels(), h, w);

  for (std::size_t o = 0; o < layer.out_ch; ++o) {
    double s = 0.0;
    for (double v : grad_out.plane(o)) s += v;
    g.bias[o] = s;
  }

  const Eigen::Map<const detail::RowMatrix> weights(layer.kernel.data(), out_ch, fan_in);
  Eigen::Map<detail::RowMatrix> grad_weights(g.kernel.data(), out_ch, fan_in);
  const std::size_t step = detail::tile_rows(layer, h, w);
  detail::RowMatrix cols, grad_cols;
  for (std::size_t y0 = 0; y0 < h; y0 += step) {
    const std::size_t y1 = std::min(h, y0 + step);
    const auto n = static_cast<Eigen::Index>((y1 - y0) * w);
    detail::im2col(input, layer, y0, y1, cols);
    detail::ConstPlaneMap go(grad_out.data() + y0 * w, out_ch, n, Eigen::OuterStride<>(static_cast<Eigen::Index>(hw)));
    grad_weights.noalias() += go * cols.transpose();
    if (want_input_grad) {
      grad_cols.noalias() = weights.transpose() * go;
      detail::col2im_add(grad_cols, layer, y0, y1, g.input);
    }
  }
  return g;
}

inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

/// Multiplies the upstream gradient by the (x > 0) mask of the ReLU input
/// (equivalently its output).
inline Tensor relu_backward(const Tensor& activation, const Tensor& grad_out) {
  require_same_shape(activation, grad_out, "relu_backward");
  Tensor g = grad_out;
  const auto a = activation.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    if (!(a[i] > 0.0)) gv[i] = 0.0;
  return g;
}

inline void relu_backward_inplace(const Tensor& activation, Tensor& grad) {
  require_same_shape(activation, grad, "relu_backward");
  const auto a = activation.values();
  auto gv = grad.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    if (!(a[i] > 0.0)) gv[i] = 0.0;
}

/// Adam optimizer state for a list of parameter blocks.
struct AdamState {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::size_t rejected_steps = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  AdamState(std::span<const std::size_t> block_sizes, double lr) : learning_rate(lr) {
    for (std::size_t n : block_sizes) {
      first_moment.emplace_back(n, 0.0);
      second_moment.emplace_back(n, 0.0);
    }
  }
};

/// One bias-corrected Adam step. Returns false, leaving parameters, moments and
/// the step counter untouched, when any gradient is non-finite.
inline bool adam_update(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                        AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adam_update: block count mismatch (params " + std::to_string(params.size()) + ", grads " +
                     std::to_string(grads.size()) + ", state " + std::to_string(state.first_moment.size()) + ")");
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size() || params[b].size() != state.first_moment[b].size() ||
        params[b].size() != state.second_moment[b].size())
      throw ShapeError("adam_update: block " + std::to_string(b) + " size mismatch");
  }
  for (const auto& g : grads) {
    if (!std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); })) {
      ++state.rejected_steps;
      log_warning("adam_update: non-finite gradient, step " + std::to_string(state.step + 1) + " rejected");
      return false;
    }
  }
  const std::size_t t = ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    const auto g = grads[b];
    const auto p = params[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  return true;
}

}  // namespace rpnn
