#pragma once

// Synthetic hyperspectral scenes with known ground truth, and the Wald
// reduced-resolution protocol.
//
// Each band is (1/E) * sum_e a_e(x, y) * s_e(lambda), with abundance maps a_e
// in [0, 1] (smoothed random field plus flat geometric shapes) and smooth
// endmember spectra s_e in [0.1, 1]. The PAN is the mean of the bands inside
// the PAN bandwidth plus optional extra texture.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "rpnn/cube.hpp"
#include "rpnn/error.hpp"
#include "rpnn/imaging.hpp"
#include "rpnn/text.hpp"

namespace rpnn {

/// Default grid: runs of 10 nm steps separated by 90 nm and larger jumps.
inline std::vector<double> default_wavelengths() {
  return {400, 410, 420, 430, 520, 530, 540, 550, 1000, 1010, 1020, 1030, 2370, 2380, 2390, 2400};
}

struct SceneSpec {
  std::size_t height = 384;
  std::size_t width = 384;
  std::vector<double> wavelengths = default_wavelengths();
  std::size_t endmembers = 5;
  double smoothness = 8.0;  // std-dev in pixels of the random-field blur
  std::size_t shapes = 24;  // flat rectangles/discs per abundance map
  double noise = 0.0;       // additive Gaussian std-dev, applied after mixing
  double pan_detail = 0.0;  // amplitude of extra PAN-only texture
  double feature_amplitude = 0.35;  // max relative size of spectral features; sets band-to-band diversity
  double pan_band_lo = 400.0;
  double pan_band_hi = 700.0;
  std::size_t ratio = 6;
  std::uint64_t seed = 0;

  void validate() const {
    if (height == 0 || width == 0) throw ConfigError("scene: dimensions must be positive");
    if (ratio < 2 || height % ratio != 0 || width % ratio != 0)
      throw ConfigError("scene: dimensions " + std::to_string(height) + "x" + std::to_string(width) +
                        " must be divisible by R=" + std::to_string(ratio));
    if (height / ratio < 4 || width / ratio < 4) throw ConfigError("scene: low-resolution size must be at least 4x4");
    if (wavelengths.empty()) throw ConfigError("scene: wavelength grid is empty");
    for (std::size_t i = 1; i < wavelengths.size(); ++i)
      if (!(wavelengths[i] > wavelengths[i - 1])) throw ConfigError("scene: wavelengths must be strictly increasing");
    if (endmembers == 0) throw ConfigError("scene: need at least one endmember");
    if (!(smoothness > 0.0)) throw ConfigError("scene: smoothness must be positive");
    if (!(feature_amplitude >= 0.0 && feature_amplitude < 1.0))
      throw ConfigError("scene: feature amplitude must be in [0, 1)");
    if (!(noise >= 0.0) || !(pan_detail >= 0.0)) throw ConfigError("scene: noise and pan detail must be non-negative");
    if (!(pan_band_lo < pan_band_hi)) throw ConfigError("scene: PAN band must satisfy lo < hi");
    if (std::none_of(wavelengths.begin(), wavelengths.end(),
                     [&](double l) { return l >= pan_band_lo && l <= pan_band_hi; }))
      throw ConfigError("scene: no band inside the PAN bandwidth");
  }
};

struct Scene {
  DataCube gt;  // high resolution
  PanImage pan;
};

namespace detail {

inline std::vector<double> gaussian_taps(double sigma) {
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double s = 0;
  for (std::ptrdiff_t i = -r; i <= r; ++i)
    s += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  for (double& v : k) v /= s;
  return k;
}

/// Separable blur with replicate edges.
inline std::vector<double> blur(const std::vector<double>& img, std::size_t h, std::size_t w, double sigma) {
  const auto k = gaussian_taps(sigma);
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  std::vector<double> tmp(img.size()), out(img.size());
  auto clampi = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::ptrdiff_t t = -r; t <= r; ++t)
        acc += k[static_cast<std::size_t>(t + r)] * img[y * w + clampi(static_cast<std::ptrdiff_t>(x) + t, w)];
      tmp[y * w + x] = acc;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0;
      for (std::ptrdiff_t t = -r; t <= r; ++t)
        acc += k[static_cast<std::size_t>(t + r)] * tmp[clampi(static_cast<std::ptrdiff_t>(y) + t, h) * w + x];
      out[y * w + x] = acc;
    }
  return out;
}

inline void rescale_unit(std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, span = *hi - *lo;
  for (double& x : v) x = span > 0 ? (x - a) / span : 0.5;
}

inline std::vector<double> abundance_map(const SceneSpec& s, std::mt19937_64& rng) {
  const std::size_t h = s.height, w = s.width;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> field(h * w);
  for (double& v : field) v = normal(rng);
  field = blur(field, h, w, s.smoothness);
  rescale_unit(field);
  for (double& v : field) v *= 0.6;
  // Flat shapes give sharp edges that the low-resolution bands cannot resolve.
  const double dim = static_cast<double>(std::min(h, w));
  for (std::size_t k = 0; k < s.shapes; ++k) {
    const double cy = u(rng) * static_cast<double>(h), cx = u(rng) * static_cast<double>(w);
    const double size = (0.03 + 0.12 * u(rng)) * dim;
    const double value = u(rng);
    const bool disc = u(rng) < 0.5;
    const double aspect = 0.5 + u(rng);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (static_cast<double>(y) - cy) / size, dx = (static_cast<double>(x) - cx) / (size * aspect);
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside) field[y * w + x] = 0.4 * field[y * w + x] + 0.6 * value;
      }
  }
  for (double& v : field) v = std::clamp(v, 0.0, 1.0);
  return field;
}

/// Smooth spectrum on the wavelength grid: albedo times a few broad Gaussian features, in [0.05, 1].
inline std::vector<double> endmember_spectrum(const std::vector<double>& wl, double amplitude, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Albedo sets the overall level; absorption/reflection features modulate it by
  // at most +-amplitude so material contrast keeps its sign across the spectrum.
  const double albedo = 0.25 + 0.65 * u(rng);
  struct Feature {
    double center, width, amplitude;
  };
  std::vector<Feature> features;
  for (int i = 0; i < 3; ++i) features.push_back({400.0 + 2000.0 * u(rng), 150.0 + 450.0 * u(rng), amplitude * (2.0 * u(rng) - 1.0)});
  std::vector<double> s(wl.size());
  for (std::size_t b = 0; b < wl.size(); ++b) {
    double v = 1.0;
    for (const Feature& f : features) {
      const double d = (wl[b] - f.center) / f.width;
      v += f.amplitude * std::exp(-0.5 * d * d);
    }
    s[b] = std::clamp(albedo * v, 0.05, 1.0);
  }
  return s;
}

}  // namespace detail

inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width, bands = spec.wavelengths.size(), e = spec.endmembers;
  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<double>> abundance, spectra;
  for (std::size_t k = 0; k < e; ++k) spectra.push_back(detail::endmember_spectrum(spec.wavelengths, spec.feature_amplitude, rng));
  for (std::size_t k = 0; k < e; ++k) abundance.push_back(detail::abundance_map(spec, rng));

  Tensor values(bands, h, w);
  for (std::size_t b = 0; b < bands; ++b) {
    auto plane = values.plane(b);
    for (std::size_t k = 0; k < e; ++k) {
      const double sk = spectra[k][b] / static_cast<double>(e);
      for (std::size_t i = 0; i < h * w; ++i) plane[i] += sk * abundance[k][i];
    }
  }

  Tensor pan(1, h, w);
  std::size_t in_band = 0;
  for (std::size_t b = 0; b < bands; ++b) {
    if (spec.wavelengths[b] < spec.pan_band_lo || spec.wavelengths[b] > spec.pan_band_hi) continue;
    ++in_band;
    const auto plane = values.plane(b);
    for (std::size_t i = 0; i < h * w; ++i) pan[i] += plane[i];
  }
  for (double& v : pan.values()) v /= static_cast<double>(in_band);

  if (spec.pan_detail > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> tex(h * w);
    for (double& v : tex) v = normal(rng);
    tex = detail::blur(tex, h, w, 1.0);
    detail::rescale_unit(tex);
    for (std::size_t i = 0; i < h * w; ++i) pan[i] = std::max(0.0, pan[i] + spec.pan_detail * (tex[i] - 0.5));
  }
  if (spec.noise > 0.0) {
    std::normal_distribution<double> normal(0.0, spec.noise);
    for (double& v : values.values()) v = std::max(0.0, v + normal(rng));
    for (double& v : pan.values()) v = std::max(0.0, v + normal(rng));
  }

  Scene scene;
  scene.gt = make_cube(std::move(values), spec.wavelengths, spec.ratio);
  scene.pan = PanImage{std::move(pan), 1.0, spec.ratio};
  return scene;
}

struct WaldInputs {
  DataCube hs;    // low resolution
  PanImage pan;   // at the fused resolution
  DataCube gt;    // reference at the fused resolution
};

/// Reduced-resolution protocol. hs = degrade(gt). A PAN already at the GT
/// resolution is used as is; a PAN R times finer than the GT is degraded to it.
inline WaldInputs wald_degrade(const DataCube& gt, const PanImage& pan, const MtfFilterSpec& spec,
                               const DecimationSpec& dec) {
  gt.validate();
  WaldInputs out;
  out.gt = gt;
  out.hs = gt;
  out.hs.values = degrade(gt.values, spec, dec);
  if (pan.height() == gt.height() && pan.width() == gt.width()) {
    out.pan = pan;
  } else if (pan.height() == gt.height() * dec.step && pan.width() == gt.width() * dec.step) {
    out.pan = pan;
    out.pan.values = degrade(pan.values, spec, dec);
  } else {
    throw ShapeError("wald_degrade: PAN " + pan.values.shape_string() + " matches neither the GT " +
                     gt.values.shape_string() + " nor R times it");
  }
  validate_pair(out.hs, out.pan, dec.step);
  return out;
}

}  // namespace rpnn
