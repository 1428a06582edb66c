#pragma once

// Reduced-resolution (SAM, ERGAS, PSNR, Q_avg) and full-resolution
// (D_lambda, D_S, Q*) quality indexes, the EXP baseline, and a band
// correlation diagnostic.
//
// Q_avg is the per-band UIQI average on non-overlapping blocks; it stands in
// for the hypercomplex Q2^n index. D_S is the cross-scale correlation
// difference mean_b |cc(fused_b, P) - cc(hs_b, degrade(P))|, an approximation
// of the regression-based index.

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "rpnn/cube.hpp"
#include "rpnn/error.hpp"
#include "rpnn/imaging.hpp"
#include "rpnn/parallel.hpp"
#include "rpnn/text.hpp"

namespace rpnn {

inline constexpr double kPsnrCap = 100.0;

namespace detail {

inline void require_same_cube_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

/// Global Pearson correlation; 0 if either input is flat.
inline double global_cc(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx / n < kVarianceFloor || syy / n < kVarianceFloor) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline bool is_flat(std::span<const double> x) {
  double m = 0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size()) < kVarianceFloor;
}

/// UIQI of one block pair (population moments).
inline double uiqi_block(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, cxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
    cxy += (x[i] - mx) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  const bool fx = vx < kVarianceFloor, fy = vy < kVarianceFloor;
  if (fx && fy) {
    // Both flat: only the luminance factor is defined (1 when the means agree).
    const double den = mx * mx + my * my;
    return den > 0.0 ? 2.0 * mx * my / den : 1.0;
  }
  if (fx || fy) return 0.0;
  const double den = (vx + vy) * (mx * mx + my * my);
  if (den == 0.0) return 0.0;  // zero-mean blocks: luminance factor undefined
  return 4.0 * cxy * mx * my / den;
}

}  // namespace detail

/// Mean spectral angle in degrees; pixels where either spectrum is all zero are skipped.
inline double sam(const Tensor& fused, const Tensor& gt, std::size_t* skipped = nullptr) {
  detail::require_same_cube_shape(fused, gt, "sam");
  const std::size_t bands = gt.channels(), pixels = gt.height() * gt.width();
  double sum = 0;
  std::size_t counted = 0, zero = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    double dot = 0, nf = 0, ng = 0;
    for (std::size_t b = 0; b < bands; ++b) {
      const double f = fused[b * pixels + p], g = gt[b * pixels + p];
      dot += f * g;
      nf += f * f;
      ng += g * g;
    }
    if (nf == 0.0 || ng == 0.0) {
      ++zero;
      continue;
    }
    sum += std::acos(std::clamp(dot / std::sqrt(nf * ng), -1.0, 1.0));
    ++counted;
  }
  if (skipped != nullptr) *skipped = zero;
  if (counted == 0) return 0.0;
  return sum / static_cast<double>(counted) * 180.0 / std::numbers::pi;
}

inline double ergas(const Tensor& fused, const Tensor& gt, std::size_t ratio = 6) {
  detail::require_same_cube_shape(fused, gt, "ergas");
  const std::size_t pixels = gt.height() * gt.width();
  double acc = 0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < gt.channels(); ++b) {
    double mse = 0, mean = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double g = gt[b * pixels + p], d = fused[b * pixels + p] - g;
      mse += d * d;
      mean += g;
    }
    mse /= static_cast<double>(pixels);
    mean /= static_cast<double>(pixels);
    if (mean == 0.0) {
      log_warning("ergas: band " + std::to_string(b + 1) + " has zero mean and is excluded");
      continue;
    }
    acc += mse / (mean * mean);
    ++used;
  }
  if (used == 0) return 0.0;
  return 100.0 / static_cast<double>(ratio) * std::sqrt(acc / static_cast<double>(used));
}

/// Band-averaged PSNR with peak = per-band ground-truth maximum, capped at 100 dB.
inline double psnr(const Tensor& fused, const Tensor& gt) {
  detail::require_same_cube_shape(fused, gt, "psnr");
  const std::size_t pixels = gt.height() * gt.width();
  double acc = 0;
  for (std::size_t b = 0; b < gt.channels(); ++b) {
    double mse = 0, peak = -INFINITY;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double g = gt[b * pixels + p], d = fused[b * pixels + p] - g;
      mse += d * d;
      peak = std::max(peak, g);
    }
    mse /= static_cast<double>(pixels);
    double v = mse == 0.0 ? kPsnrCap : 10.0 * std::log10(peak * peak / mse);
    if (!(v < kPsnrCap)) v = kPsnrCap;
    acc += v;
  }
  return acc / static_cast<double>(gt.channels());
}

/// Per-band UIQI over non-overlapping block x block windows, averaged over blocks then bands.
inline double q_avg(const Tensor& fused, const Tensor& gt, std::size_t block = 32) {
  detail::require_same_cube_shape(fused, gt, "q_avg");
  if (block == 0 || gt.height() < block || gt.width() < block)
    throw ShapeError("q_avg: image " + gt.shape_string() + " smaller than block " + std::to_string(block));
  const std::size_t by = gt.height() / block, bx = gt.width() / block;
  double total = 0;
  std::vector<double> x(block * block), y(block * block);
  for (std::size_t b = 0; b < gt.channels(); ++b) {
    double band_sum = 0;
    for (std::size_t i = 0; i < by; ++i)
      for (std::size_t j = 0; j < bx; ++j) {
        for (std::size_t u = 0; u < block; ++u)
          for (std::size_t v = 0; v < block; ++v) {
            x[u * block + v] = gt(b, i * block + u, j * block + v);
            y[u * block + v] = fused(b, i * block + u, j * block + v);
          }
        band_sum += detail::uiqi_block(x, y);
      }
    total += band_sum / static_cast<double>(by * bx);
  }
  return total / static_cast<double>(gt.channels());
}

/// Applies degrade to every band.
inline Tensor degrade_all(const Tensor& hr, const MtfFilterSpec& spec, const DecimationSpec& dec) {
  return degrade(hr, spec, dec);
}

/// Block size for Q_avg at low resolution: 32, or the largest that fits.
inline std::size_t lr_block(const Tensor& t, std::size_t block) {
  return std::min({block, t.height(), t.width()});
}

inline double d_lambda(const Tensor& fused, const Tensor& hs, const MtfFilterSpec& spec, const DecimationSpec& dec,
                       std::size_t block = 32) {
  const Tensor low = degrade_all(fused, spec, dec);
  detail::require_same_cube_shape(low, hs, "d_lambda (degraded fused vs hs)");
  return std::clamp(1.0 - q_avg(low, hs, lr_block(hs, block)), 0.0, 1.0);
}

inline double d_s(const Tensor& fused, const Tensor& pan, const Tensor& hs, const MtfFilterSpec& spec,
                  const DecimationSpec& dec) {
  if (pan.channels() != 1) throw ShapeError("d_s: PAN must be single-band");
  if (fused.height() != pan.height() || fused.width() != pan.width() || fused.channels() != hs.channels())
    throw ShapeError("d_s: fused " + fused.shape_string() + " inconsistent with PAN " + pan.shape_string() +
                     " / hs " + hs.shape_string());
  if (detail::is_flat(pan.values())) throw ValueError("d_s: PAN is flat");
  const Tensor pan_lr = degrade(pan, spec, dec);
  if (pan_lr.height() != hs.height() || pan_lr.width() != hs.width())
    throw ShapeError("d_s: degraded PAN " + pan_lr.shape_string() + " does not match hs " + hs.shape_string());
  double acc = 0;
  for (std::size_t b = 0; b < hs.channels(); ++b)
    acc += std::abs(detail::global_cc(fused.plane(b), pan.values()) - detail::global_cc(hs.plane(b), pan_lr.values()));
  return std::min(1.0, acc / static_cast<double>(hs.channels()));
}

inline double q_star(double d_lambda_value, double d_s_value) { return (1.0 - d_lambda_value) * (1.0 - d_s_value); }

/// Band-wise interpolation with no sharpening.
inline DataCube exp_baseline(const DataCube& hs) {
  DataCube out = hs;
  out.values = interpolate_band(hs.values, hs.ratio);
  return out;
}

/// Global correlation between every band pair; flat bands get zero rows/columns (diagonal 1).
inline std::vector<std::vector<double>> band_correlation_matrix(const Tensor& cube) {
  const std::size_t n = cube.channels();
  if (n < 2) throw ShapeError("band_correlation_matrix: need at least 2 bands");
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    m[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) m[i][j] = m[j][i] = detail::global_cc(cube.plane(i), cube.plane(j));
  }
  return m;
}

struct MetricsReport {
  enum class Mode { reduced, full } mode = Mode::reduced;
  double sam_deg = 0, ergas = 0, psnr_db = 0, q_avg = 0;
  double d_lambda = 0, d_s = 0, q_star = 0;
};

inline MetricsReport reduced_resolution_report(const Tensor& fused, const Tensor& gt, std::size_t ratio = 6,
                                               std::size_t block = 32) {
  MetricsReport r;
  r.mode = MetricsReport::Mode::reduced;
  r.sam_deg = sam(fused, gt);
  r.ergas = ergas(fused, gt, ratio);
  r.psnr_db = psnr(fused, gt);
  r.q_avg = q_avg(fused, gt, block);
  return r;
}

inline MetricsReport full_resolution_report(const Tensor& fused, const Tensor& pan, const Tensor& hs,
                                            const MtfFilterSpec& spec, const DecimationSpec& dec,
                                            std::size_t block = 32) {
  MetricsReport r;
  r.mode = MetricsReport::Mode::full;
  r.d_lambda = d_lambda(fused, hs, spec, dec, block);
  r.d_s = d_s(fused, pan, hs, spec, dec);
  r.q_star = q_star(r.d_lambda, r.d_s);
  return r;
}

/// Fixed key-value schema, one key per line.
inline void write_report(std::ostream& out, const MetricsReport& r) {
  if (r.mode == MetricsReport::Mode::reduced) {
    out << "mode=reduced\n";
    out << "sam_deg=" << format_double(r.sam_deg) << '\n';
    out << "ergas=" << format_double(r.ergas) << '\n';
    out << "psnr_db=" << format_double(r.psnr_db) << '\n';
    out << "q_avg=" << format_double(r.q_avg) << '\n';
  } else {
    out << "mode=full\n";
    out << "d_lambda=" << format_double(r.d_lambda) << '\n';
    out << "d_s=" << format_double(r.d_s) << '\n';
    out << "q_star=" << format_double(r.q_star) << '\n';
  }
}

}  // namespace rpnn
