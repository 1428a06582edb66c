#pragma once

// Resolution-bridging primitives: cubic band interpolation to PAN scale,
// MTF-matched Gaussian low-pass, decimation, and windowed local statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rpnn/error.hpp"
#include "rpnn/parallel.hpp"
#include "rpnn/tensor.hpp"

namespace rpnn {

struct MtfFilterSpec {
  std::size_t ratio = 6;
  double nyquist_gain = 0.3;
  std::size_t half_width = 20;

  /// Spatial standard deviation (in high-resolution pixels) of the Gaussian whose
  /// continuous frequency response at the decimated Nyquist 1/(2R) equals G.
  double sigma() const {
    if (!(nyquist_gain > 0.0 && nyquist_gain < 1.0))
      throw ValueError("MtfFilterSpec: Nyquist gain must lie in (0,1), got " + std::to_string(nyquist_gain));
    if (ratio == 0) throw ValueError("MtfFilterSpec: ratio must be positive");
    return static_cast<double>(ratio) / std::numbers::pi * std::sqrt(-2.0 * std::log(nyquist_gain));
  }
};

struct DecimationSpec {
  std::size_t step = 6;
  std::size_t row_offset = 3;
  std::size_t col_offset = 3;

  /// Offset (R/2, R/2), matching the sample positions used by interpolate_band.
  static DecimationSpec centered(std::size_t ratio) { return {ratio, ratio / 2, ratio / 2}; }

  void validate() const {
    if (step == 0) throw ValueError("DecimationSpec: step must be positive");
    if (row_offset >= step || col_offset >= step)
      throw ValueError("DecimationSpec: offset (" + std::to_string(row_offset) + "," + std::to_string(col_offset) +
                       ") must be smaller than step " + std::to_string(step));
  }

  std::size_t output_rows(std::size_t h) const { return h > row_offset ? (h - row_offset + step - 1) / step : 0; }
  std::size_t output_cols(std::size_t w) const { return w > col_offset ? (w - col_offset + step - 1) / step : 0; }
};

/// Normalized 1-D Gaussian taps, length 2*half_width + 1.
inline std::vector<double> mtf_kernel(const MtfFilterSpec& spec) {
  const double s = spec.sigma();
  const auto hw = static_cast<std::ptrdiff_t>(spec.half_width);
  std::vector<double> taps(2 * spec.half_width + 1);
  double sum = 0.0;
  for (std::ptrdiff_t t = -hw; t <= hw; ++t) {
    const double v = std::exp(-0.5 * static_cast<double>(t * t) / (s * s));
    taps[static_cast<std::size_t>(t + hw)] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

namespace detail {

// out(y, j) = sum_t taps[t] * in(y, clamp(cols[j] + t - hw)) for every row y.
inline void filter_rows_at(const double* in, std::size_t h, std::size_t w, const std::vector<double>& taps,
                           const std::vector<std::size_t>& cols, double* out) {
  const auto hw = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const std::size_t nc = cols.size();
  parallel_for(static_cast<std::ptrdiff_t>(h), [&](std::ptrdiff_t yy) {
    const double* row = in + static_cast<std::size_t>(yy) * w;
    double* dst = out + static_cast<std::size_t>(yy) * nc;
    for (std::size_t j = 0; j < nc; ++j) {
      const auto c = static_cast<std::ptrdiff_t>(cols[j]);
      double acc = 0.0;
      for (std::size_t t = 0; t < taps.size(); ++t)
        acc += taps[t] * row[clamp_index(c + static_cast<std::ptrdiff_t>(t) - hw, w)];
      dst[j] = acc;
    }
  });
}

// out(i, x) = sum_t taps[t] * in(clamp(rows[i] + t - hw), x).
inline void filter_cols_at(const double* in, std::size_t h, std::size_t w, const std::vector<double>& taps,
                           const std::vector<std::size_t>& rows, double* out) {
  const auto hw = static_cast<std::ptrdiff_t>(taps.size() / 2);
  parallel_for(static_cast<std::ptrdiff_t>(rows.size()), [&](std::ptrdiff_t ii) {
    const auto r = static_cast<std::ptrdiff_t>(rows[static_cast<std::size_t>(ii)]);
    double* dst = out + static_cast<std::size_t>(ii) * w;
    std::fill_n(dst, w, 0.0);
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const double* src = in + clamp_index(r + static_cast<std::ptrdiff_t>(t) - hw, h) * w;
      const double k = taps[t];
      for (std::size_t x = 0; x < w; ++x) dst[x] += k * src[x];
    }
  });
}

// Adjoint of filter_rows_at.
inline void filter_rows_at_adjoint(const double* g, std::size_t h, std::size_t w, const std::vector<double>& taps,
                                   const std::vector<std::size_t>& cols, double* out) {
  const auto hw = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const std::size_t nc = cols.size();
  parallel_for(static_cast<std::ptrdiff_t>(h), [&](std::ptrdiff_t yy) {
    double* row = out + static_cast<std::size_t>(yy) * w;
    const double* src = g + static_cast<std::size_t>(yy) * nc;
    std::fill_n(row, w, 0.0);
    for (std::size_t j = 0; j < nc; ++j) {
      const auto c = static_cast<std::ptrdiff_t>(cols[j]);
      const double v = src[j];
      for (std::size_t t = 0; t < taps.size(); ++t) row[clamp_index(c + static_cast<std::ptrdiff_t>(t) - hw, w)] += taps[t] * v;
    }
  });
}

// Adjoint of filter_cols_at. Serial over output rows so accumulation order is fixed.
inline void filter_cols_at_adjoint(const double* g, std::size_t h, std::size_t w, const std::vector<double>& taps,
                                   const std::vector<std::size_t>& rows, double* out) {
  const auto hw = static_cast<std::ptrdiff_t>(taps.size() / 2);
  std::fill_n(out, h * w, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<std::ptrdiff_t>(rows[i]);
    const double* src = g + i * w;
    for (std::size_t t = 0; t < taps.size(); ++t) {
      double* dst = out + clamp_index(r + static_cast<std::ptrdiff_t>(t) - hw, h) * w;
      const double k = taps[t];
      for (std::size_t x = 0; x < w; ++x) dst[x] += k * src[x];
    }
  }
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline std::vector<std::size_t> sampled_indices(std::size_t count, std::size_t offset, std::size_t step) {
  std::vector<std::size_t> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = offset + i * step;
  return v;
}

// Catmull-Rom weights for fractional position f in [0,1) over samples i-1..i+2.
inline std::array<double, 4> catmull_rom(double f) {
  const double f2 = f * f, f3 = f2 * f;
  return {0.5 * (-f3 + 2.0 * f2 - f), 0.5 * (3.0 * f3 - 5.0 * f2 + 2.0), 0.5 * (-3.0 * f3 + 4.0 * f2 + f),
          0.5 * (f3 - f2)};
}

struct CubicTable {
  std::vector<std::array<std::size_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

// High-resolution coordinate u reads low-resolution coordinate (u - R/2)/R.
inline CubicTable cubic_table(std::size_t n_lr, std::size_t ratio) {
  CubicTable t;
  const std::size_t n_hr = n_lr * ratio;
  const auto half = static_cast<std::ptrdiff_t>(ratio / 2);
  t.index.resize(n_hr);
  t.weight.resize(n_hr);
  for (std::size_t u = 0; u < n_hr; ++u) {
    const std::ptrdiff_t num = static_cast<std::ptrdiff_t>(u) - half;
    const auto r = static_cast<std::ptrdiff_t>(ratio);
    const std::ptrdiff_t base = num >= 0 ? num / r : -((-num + r - 1) / r);
    const double f = static_cast<double>(num - base * r) / static_cast<double>(ratio);
    for (std::ptrdiff_t j = 0; j < 4; ++j) t.index[u][static_cast<std::size_t>(j)] = clamp_index(base - 1 + j, n_lr);
    t.weight[u] = catmull_rom(f);
  }
  return t;
}

}  // namespace detail

/// Upsamples every channel by `ratio` with separable Catmull-Rom cubic
/// interpolation. Low-resolution sample (n, m) lands on (R*n + R/2, R*m + R/2).
inline Tensor interpolate_band(const Tensor& band, std::size_t ratio) {
  if (ratio < 2) throw ValueError("interpolate_band: ratio must be >= 2, got " + std::to_string(ratio));
  if (band.height() < 4 || band.width() < 4)
    throw ShapeError("interpolate_band: need at least 4x4 samples for cubic support, got " + band.shape_string());
  const std::size_t h = band.height(), w = band.width(), hh = h * ratio, ww = w * ratio;
  const auto tx = detail::cubic_table(w, ratio);
  const auto ty = detail::cubic_table(h, ratio);
  Tensor out(band.channels(), hh, ww);
  std::vector<double> rows(h * ww);
  for (std::size_t c = 0; c < band.channels(); ++c) {
    const auto src = band.plane(c);
    for (std::size_t y = 0; y < h; ++y) {
      const double* s = src.data() + y * w;
      double* d = rows.data() + y * ww;
      for (std::size_t u = 0; u < ww; ++u) {
        const auto& ix = tx.index[u];
        const auto& wx = tx.weight[u];
        d[u] = wx[0] * s[ix[0]] + wx[1] * s[ix[1]] + wx[2] * s[ix[2]] + wx[3] * s[ix[3]];
      }
    }
    auto dst = out.plane(c);
    parallel_for(static_cast<std::ptrdiff_t>(hh), [&](std::ptrdiff_t vv) {
      const auto v = static_cast<std::size_t>(vv);
      const auto& iy = ty.index[v];
      const auto& wy = ty.weight[v];
      double* d = dst.data() + v * ww;
      const double* r0 = rows.data() + iy[0] * ww;
      const double* r1 = rows.data() + iy[1] * ww;
      const double* r2 = rows.data() + iy[2] * ww;
      const double* r3 = rows.data() + iy[3] * ww;
      for (std::size_t u = 0; u < ww; ++u) d[u] = wy[0] * r0[u] + wy[1] * r1[u] + wy[2] * r2[u] + wy[3] * r3[u];
    });
  }
  return out;
}

/// Separable MTF-matched Gaussian low-pass with replicate edges, per channel.
inline Tensor mtf_lowpass(const Tensor& image, const MtfFilterSpec& spec) {
  const auto taps = mtf_kernel(spec);
  const std::size_t h = image.height(), w = image.width();
  Tensor out(image.channels(), h, w);
  std::vector<double> tmp(h * w);
  const auto all_cols = detail::iota_indices(w);
  const auto all_rows = detail::iota_indices(h);
  for (std::size_t c = 0; c < image.channels(); ++c) {
    detail::filter_rows_at(image.plane(c).data(), h, w, taps, all_cols, tmp.data());
    detail::filter_cols_at(tmp.data(), h, w, taps, all_rows, out.plane(c).data());
  }
  return out;
}

namespace detail {

inline void check_degrade_dims(const Tensor& hr, const DecimationSpec& dec) {
  dec.validate();
  if (hr.height() <= dec.row_offset || hr.width() <= dec.col_offset)
    throw ShapeError("degrade: input " + hr.shape_string() + " too small for offset (" +
                     std::to_string(dec.row_offset) + "," + std::to_string(dec.col_offset) + ")");
  if (hr.height() % dec.step != 0 || hr.width() % dec.step != 0)
    throw ShapeError("degrade: input " + hr.shape_string() + " not divisible by step " + std::to_string(dec.step));
}

}  // namespace detail

/// Low-pass filter then sample at (n0 + R*n, m0 + R*m). Values equal
/// mtf_lowpass(hr) read at the sampled grid; only the sampled outputs are formed.
inline Tensor degrade(const Tensor& hr, const MtfFilterSpec& spec, const DecimationSpec& dec) {
  detail::check_degrade_dims(hr, dec);
  const auto taps = mtf_kernel(spec);
  const std::size_t h = hr.height(), w = hr.width();
  const std::size_t oh = dec.output_rows(h), ow = dec.output_cols(w);
  const auto cols = detail::sampled_indices(ow, dec.col_offset, dec.step);
  const auto rows = detail::sampled_indices(oh, dec.row_offset, dec.step);
  Tensor out(hr.channels(), oh, ow);
  std::vector<double> tmp(h * ow);
  for (std::size_t c = 0; c < hr.channels(); ++c) {
    detail::filter_rows_at(hr.plane(c).data(), h, w, taps, cols, tmp.data());
    detail::filter_cols_at(tmp.data(), h, ow, taps, rows, out.plane(c).data());
  }
  return out;
}

/// Adjoint of degrade: maps a low-resolution gradient to the high-resolution grid.
inline Tensor degrade_adjoint(const Tensor& grad_lr, std::size_t hr_height, std::size_t hr_width,
                              const MtfFilterSpec& spec, const DecimationSpec& dec) {
  const std::size_t oh = dec.output_rows(hr_height), ow = dec.output_cols(hr_width);
  if (grad_lr.height() != oh || grad_lr.width() != ow)
    throw ShapeError("degrade_adjoint: gradient " + grad_lr.shape_string() + " does not match " +
                     std::to_string(oh) + "x" + std::to_string(ow));
  const auto taps = mtf_kernel(spec);
  const auto cols = detail::sampled_indices(ow, dec.col_offset, dec.step);
  const auto rows = detail::sampled_indices(oh, dec.row_offset, dec.step);
  Tensor out(grad_lr.channels(), hr_height, hr_width);
  std::vector<double> tmp(hr_height * ow);
  for (std::size_t c = 0; c < grad_lr.channels(); ++c) {
    detail::filter_cols_at_adjoint(grad_lr.plane(c).data(), hr_height, ow, taps, rows, tmp.data());
    detail::filter_rows_at_adjoint(tmp.data(), hr_height, hr_width, taps, cols, out.plane(c).data());
  }
  return out;
}

/// Per-window first and second moments over a sigma x sigma window centered
/// at each pixel (offsets -sigma/2 .. sigma-1-sigma/2, replicate edges).
struct WindowStats {
  std::size_t window = 0;
  Tensor mean_x, mean_y, var_x, var_y, cov;
};

namespace detail {

inline constexpr double kVarianceFloor = 1e-12;

// Replicate-padded copy: padded(u, v) = img(clamp(u - lo), clamp(v - lo)).
inline std::vector<double> pad_replicate(std::span<const double> img, std::size_t h, std::size_t w, std::size_t lo,
                                         std::size_t hi) {
  const std::size_t ph = h + lo + hi, pw = w + lo + hi;
  std::vector<double> out(ph * pw);
  for (std::size_t u = 0; u < ph; ++u) {
    const double* src = img.data() + clamp_index(static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(lo), h) * w;
    double* dst = out.data() + u * pw;
    for (std::size_t v = 0; v < pw; ++v)
      dst[v] = src[clamp_index(static_cast<std::ptrdiff_t>(v) - static_cast<std::ptrdiff_t>(lo), w)];
  }
  return out;
}

// Box sum of a padded image: out(i, j) = sum over padded rows i..i+s-1, cols j..j+s-1.
inline std::vector<double> box_sum(const std::vector<double>& padded, std::size_t h, std::size_t w, std::size_t s) {
  const std::size_t pw = w + s - 1, ph = h + s - 1;
  std::vector<double> rows(ph * w);
  for (std::size_t u = 0; u < ph; ++u) {
    const double* src = padded.data() + u * pw;
    double* dst = rows.data() + u * w;
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < s; ++t) acc += src[j + t];
      dst[j] = acc;
    }
  }
  std::vector<double> out(h * w, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    double* dst = out.data() + i * w;
    for (std::size_t t = 0; t < s; ++t) {
      const double* src = rows.data() + (i + t) * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  }
  return out;
}

}  // namespace detail

/// Window means by box sums, then centered second moments per window.
inline WindowStats local_window_stats(const Tensor& x, const Tensor& y, std::size_t window) {
  require_same_shape(x, y, "local_window_stats");
  if (x.channels() != 1) throw ShapeError("local_window_stats: expected single-channel images, got " + x.shape_string());
  if (window < 2) throw ValueError("local_window_stats: window must be >= 2, got " + std::to_string(window));
  const std::size_t h = x.height(), w = x.width(), s = window;
  const std::size_t lo = s / 2, hi = s - 1 - lo, pw = w + s - 1;
  const auto px = detail::pad_replicate(x.plane(0), h, w, lo, hi);
  const auto py = detail::pad_replicate(y.plane(0), h, w, lo, hi);
  const double inv_n = 1.0 / static_cast<double>(s * s);

  WindowStats st;
  st.window = s;
  st.mean_x = Tensor(1, h, w);
  st.mean_y = Tensor(1, h, w);
  st.var_x = Tensor(1, h, w);
  st.var_y = Tensor(1, h, w);
  st.cov = Tensor(1, h, w);
  const auto sx = detail::box_sum(px, h, w, s);
  const auto sy = detail::box_sum(py, h, w, s);
  for (std::size_t p = 0; p < h * w; ++p) {
    st.mean_x[p] = sx[p] * inv_n;
    st.mean_y[p] = sy[p] * inv_n;
  }
  parallel_for(static_cast<std::ptrdiff_t>(h), [&](std::ptrdiff_t ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t p = i * w + j;
      const double mx = st.mean_x[p], my = st.mean_y[p];
      double vxx = 0.0, vyy = 0.0, vxy = 0.0;
      for (std::size_t a = 0; a < s; ++a) {
        const double* rx = px.data() + (i + a) * pw + j;
        const double* ry = py.data() + (i + a) * pw + j;
        for (std::size_t b = 0; b < s; ++b) {
          const double dx = rx[b] - mx, dy = ry[b] - my;
          vxx += dx * dx;
          vyy += dy * dy;
          vxy += dx * dy;
        }
      }
      st.var_x[p] = vxx * inv_n;
      st.var_y[p] = vyy * inv_n;
      st.cov[p] = vxy * inv_n;
    }
  });
  return st;
}

/// Local correlation coefficient map. Windows where either variance is below
/// 1e-12 yield 0; values are clamped to [-1, 1].
inline Tensor local_cc(const WindowStats& st) {
  Tensor rho(1, st.cov.height(), st.cov.width());
  for (std::size_t p = 0; p < rho.size(); ++p) {
    const double vx = st.var_x[p], vy = st.var_y[p];
    if (vx < detail::kVarianceFloor || vy < detail::kVarianceFloor) continue;
    rho[p] = std::clamp(st.cov[p] / std::sqrt(vx * vy), -1.0, 1.0);
  }
  return rho;
}

inline Tensor local_cc(const Tensor& x, const Tensor& y, std::size_t window) {
  return local_cc(local_window_stats(x, y, window));
}

}  // namespace rpnn
