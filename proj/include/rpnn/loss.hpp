#pragma once

// Unsupervised band-wise loss: L = L_spectral + beta * L_spatial.
//
//   L_spectral = mean |degrade(fused) - band_lr|
//   L_spatial  = mean |rho_max - rho_sigma(pan, fused)|
//
// beta depends on whether the band wavelength falls inside the PAN bandwidth.

#include <cmath>
#include <cstddef>
#include <string>

#include "rpnn/error.hpp"
#include "rpnn/imaging.hpp"
#include "rpnn/tensor.hpp"

namespace rpnn {

enum class RhoMaxMode { constant, estimated };

inline std::string to_string(RhoMaxMode m) { return m == RhoMaxMode::constant ? "const" : "estimated"; }

inline RhoMaxMode parse_rho_max_mode(const std::string& s) {
  if (s == "const" || s == "constant") return RhoMaxMode::constant;
  if (s == "estimated") return RhoMaxMode::estimated;
  throw ConfigError("rho_max_mode: expected 'const' or 'estimated', got '" + s + "'");
}

struct LossConfig {
  double beta_overlap = 0.5;
  double beta_non_overlap = 0.25;
  std::size_t window = 6;
  RhoMaxMode rho_max_mode = RhoMaxMode::estimated;
  double pan_band_lo = 400.0;
  double pan_band_hi = 700.0;
  // rho_max is estimated on (factor * window)-sized windows.
  std::size_t rho_max_window_factor = 6;

  void validate() const {
    if (!(beta_non_overlap > 0.0 && beta_non_overlap <= beta_overlap))
      throw ConfigError("LossConfig: need 0 < beta_non_overlap <= beta_overlap (got " +
                        std::to_string(beta_non_overlap) + ", " + std::to_string(beta_overlap) + ")");
    if (window < 2) throw ConfigError("LossConfig: window must be >= 2");
    if (!(pan_band_lo < pan_band_hi)) throw ConfigError("LossConfig: PAN band must satisfy lo < hi");
  }

  bool overlaps_pan(double wavelength_nm) const { return wavelength_nm >= pan_band_lo && wavelength_nm <= pan_band_hi; }
  double beta_for(double wavelength_nm) const { return overlaps_pan(wavelength_nm) ? beta_overlap : beta_non_overlap; }
};

struct LossReport {
  double l_spectral = 0.0;
  double l_spatial = 0.0;
  double l_total = 0.0;
  double beta = 0.0;
  std::size_t iteration = 0;

  bool finite() const { return std::isfinite(l_spectral) && std::isfinite(l_spatial) && std::isfinite(l_total); }
};

/// A scalar loss value with its gradient w.r.t. the fused band.
struct LossValue {
  double value = 0.0;
  Tensor grad;
};

namespace detail {

inline double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Adjoint of a box sum over padded windows: out(u, v) accumulates A(i, j) for
// every window (i, j) whose padded footprint covers (u, v).
inline std::vector<double> box_sum_adjoint(const std::vector<double>& a, std::size_t h, std::size_t w, std::size_t s) {
  const std::size_t ph = h + s - 1, pw = w + s - 1;
  std::vector<double> cols(h * pw, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double* src = a.data() + i * w;
    double* dst = cols.data() + i * pw;
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t t = 0; t < s; ++t) dst[j + t] += src[j];
  }
  std::vector<double> out(ph * pw, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    const double* src = cols.data() + i * pw;
    for (std::size_t t = 0; t < s; ++t) {
      double* dst = out.data() + (i + t) * pw;
      for (std::size_t v = 0; v < pw; ++v) dst[v] += src[v];
    }
  }
  return out;
}

}  // namespace detail

/// Mean absolute difference between degrade(fused) and the low-resolution band.
/// The subgradient of |.| at 0 is taken as 0.
inline LossValue spectral_loss(const Tensor& fused, const Tensor& band_lr, const MtfFilterSpec& spec,
                               const DecimationSpec& dec) {
  if (fused.channels() != 1 || band_lr.channels() != 1)
    throw ShapeError("spectral_loss: expected single-channel inputs, got " + fused.shape_string() + " and " +
                     band_lr.shape_string());
  const Tensor down = degrade(fused, spec, dec);
  require_same_shape(down, band_lr, "spectral_loss (degraded fused vs band)");
  const double inv_n = 1.0 / static_cast<double>(band_lr.size());
  Tensor g(1, band_lr.height(), band_lr.width());
  double sum = 0.0;
  for (std::size_t i = 0; i < band_lr.size(); ++i) {
    const double d = down[i] - band_lr[i];
    sum += std::abs(d);
    g[i] = detail::sign_or_zero(d) * inv_n;
  }
  return {sum * inv_n, degrade_adjoint(g, fused.height(), fused.width(), spec, dec)};
}

/// Upper-bound correlation map for the spatial term: all ones in constant mode,
/// otherwise the local CC between the low-passed PAN and the interpolated band
/// on (factor * window)-sized windows, clamped to [0, 1].
inline Tensor rho_max_map(const Tensor& pan, const Tensor& band_lr, const LossConfig& cfg, const MtfFilterSpec& spec) {
  if (pan.channels() != 1 || band_lr.channels() != 1) throw ShapeError("rho_max_map: expected single-channel inputs");
  if (pan.height() != band_lr.height() * spec.ratio || pan.width() != band_lr.width() * spec.ratio)
    throw ShapeError("rho_max_map: PAN " + pan.shape_string() + " is not " + std::to_string(spec.ratio) +
                     "x the band " + band_lr.shape_string());
  if (cfg.rho_max_mode == RhoMaxMode::constant) return Tensor(1, pan.height(), pan.width(), 1.0);
  Tensor rho = local_cc(mtf_lowpass(pan, spec), interpolate_band(band_lr, spec.ratio),
                        cfg.window * cfg.rho_max_window_factor);
  for (double& v : rho.values()) v = std::clamp(v, 0.0, 1.0);
  return rho;
}

/// Mean over pixels of |rho_max - rho_sigma(pan, fused)| with its analytic
/// gradient w.r.t. fused. Windows under the variance floor contribute no gradient.
inline LossValue spatial_loss(const Tensor& fused, const Tensor& pan, const Tensor& rho_max, std::size_t window) {
  require_same_shape(fused, pan, "spatial_loss (fused vs pan)");
  require_same_shape(fused, rho_max, "spatial_loss (fused vs rho_max)");
  const std::size_t h = fused.height(), w = fused.width(), s = window, n_px = h * w;
  const WindowStats st = local_window_stats(pan, fused, s);
  const double inv_px = 1.0 / static_cast<double>(n_px);
  const double inv_win = 1.0 / static_cast<double>(s * s);

  // Per-window coefficients of d rho / d fused_cell = (1/n)[(x - mx) a - (y - my) b].
  std::vector<double> ga(n_px, 0.0), gam(n_px, 0.0), gb(n_px, 0.0), gbm(n_px, 0.0);
  double sum = 0.0;
  for (std::size_t p = 0; p < n_px; ++p) {
    const double vx = st.var_x[p], vy = st.var_y[p];
    const bool valid = vx >= detail::kVarianceFloor && vy >= detail::kVarianceFloor;
    double rho = 0.0, a = 0.0;
    if (valid) {
      a = 1.0 / std::sqrt(vx * vy);
      rho = std::clamp(st.cov[p] * a, -1.0, 1.0);
    }
    const double diff = rho_max[p] - rho;
    sum += std::abs(diff);
    if (!valid) continue;
    const double g = -detail::sign_or_zero(diff) * inv_px;
    const double b = rho / vy;
    ga[p] = g * a;
    gam[p] = g * a * st.mean_x[p];
    gb[p] = g * b;
    gbm[p] = g * b * st.mean_y[p];
  }

  const std::size_t lo = s / 2, hi = s - 1 - lo, pw = w + s - 1, ph = h + s - 1;
  const auto px = detail::pad_replicate(pan.plane(0), h, w, lo, hi);
  const auto py = detail::pad_replicate(fused.plane(0), h, w, lo, hi);
  const auto sa = detail::box_sum_adjoint(ga, h, w, s);
  const auto sam = detail::box_sum_adjoint(gam, h, w, s);
  const auto sb = detail::box_sum_adjoint(gb, h, w, s);
  const auto sbm = detail::box_sum_adjoint(gbm, h, w, s);

  Tensor grad(1, h, w);
  auto gp = grad.plane(0);
  for (std::size_t u = 0; u < ph; ++u) {
    const std::size_t row = detail::clamp_index(static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(lo), h);
    for (std::size_t v = 0; v < pw; ++v) {
      const std::size_t q = u * pw + v;
      const double val = inv_win * (px[q] * sa[q] - sam[q] - py[q] * sb[q] + sbm[q]);
      const std::size_t col = detail::clamp_index(static_cast<std::ptrdiff_t>(v) - static_cast<std::ptrdiff_t>(lo), w);
      gp[row * w + col] += val;
    }
  }
  return {sum * inv_px, std::move(grad)};
}

/// Per-band quantities that stay fixed while the fused estimate changes.
struct BandLossContext {
  Tensor band_lr;
  Tensor pan;
  Tensor rho_max;
  double wavelength = 0.0;
  double beta = 0.0;
};

inline BandLossContext make_band_context(const Tensor& band_lr, const Tensor& pan, double wavelength,
                                         const LossConfig& cfg, const MtfFilterSpec& spec) {
  cfg.validate();
  return {band_lr, pan, rho_max_map(pan, band_lr, cfg, spec), wavelength, cfg.beta_for(wavelength)};
}

struct CombinedLoss {
  LossReport report;
  Tensor grad;
};

inline CombinedLoss combined_loss(const Tensor& fused, const BandLossContext& ctx, const LossConfig& cfg,
                                  const MtfFilterSpec& spec, const DecimationSpec& dec) {
  LossValue spectral = spectral_loss(fused, ctx.band_lr, spec, dec);
  LossValue spatial = spatial_loss(fused, ctx.pan, ctx.rho_max, cfg.window);
  CombinedLoss out;
  out.report.l_spectral = spectral.value;
  out.report.l_spatial = spatial.value;
  out.report.beta = ctx.beta;
  out.report.l_total = spectral.value + ctx.beta * spatial.value;
  out.grad = std::move(spectral.grad);
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += ctx.beta * spatial.grad[i];
  return out;
}

inline CombinedLoss combined_loss(const Tensor& fused, const Tensor& band_lr, const Tensor& pan, double wavelength,
                                  const LossConfig& cfg, const MtfFilterSpec& spec, const DecimationSpec& dec) {
  return combined_loss(fused, make_band_context(band_lr, pan, wavelength, cfg, spec), cfg, spec, dec);
}

}  // namespace rpnn
