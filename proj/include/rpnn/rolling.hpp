#pragma once

// Band-wise tuning with parameter propagation along the spectral axis, plus
// the patch-based pretraining that produces the initial parameters.

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rpnn/cube.hpp"
#include "rpnn/error.hpp"
#include "rpnn/imaging.hpp"
#include "rpnn/loss.hpp"
#include "rpnn/network.hpp"
#include "rpnn/parallel.hpp"
#include "rpnn/text.hpp"

namespace rpnn {

enum class Direction { forward, backward };

inline std::string to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

inline Direction parse_direction(const std::string& s) {
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  throw ConfigError("direction must be 'forward' or 'backward', got '" + s + "'");
}

struct TuningConfig {
  double alpha = 1.5;  // iterations per nm
  std::size_t first_band_iterations = 20;
  std::size_t max_iterations = 80;
  double learning_rate = 1e-5;
  Direction direction = Direction::forward;
  LossConfig loss;
  MtfFilterSpec mtf;

  DecimationSpec decimation() const { return DecimationSpec::centered(mtf.ratio); }

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive, got " + format_double(alpha));
    if (first_band_iterations == 0) throw ConfigError("first-band iterations must be positive");
    if (max_iterations == 0) throw ConfigError("iteration cap must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be non-negative, got " + format_double(learning_rate));
    loss.validate();
    mtf.sigma();
  }
};

/// N_b for the b-th band in processing order (1-based).
inline std::size_t schedule_iterations(std::size_t b, double lambda_b, double lambda_prev, const TuningConfig& cfg) {
  if (b == 0) throw ValueError("schedule_iterations: band index is 1-based");
  if (b == 1) return cfg.first_band_iterations;
  const double gap = lambda_b - lambda_prev;
  if (!(gap > 0.0))
    throw ValueError("schedule_iterations: wavelength gap must be positive (band " + std::to_string(b) + ": " +
                     format_double(lambda_prev) + " -> " + format_double(lambda_b) + " nm)");
  const double n = std::round(std::min(cfg.alpha * gap, static_cast<double>(cfg.max_iterations)));
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

struct BandTrace {
  std::size_t band = 0;  // 1-based index in ascending-wavelength order
  double wavelength = 0.0;
  std::size_t iterations = 0;
  std::vector<LossReport> reports;  // loss before each update
  LossReport final_report;          // loss of the returned parameters
  bool aborted = false;
  std::size_t rejected_steps = 0;
};

struct TuneResult {
  NetParams params;
  Tensor fused;
  BandTrace trace;
};

/// Runs exactly `iterations` Adam steps on the whole image and returns the
/// parameters after the last step together with their prediction.
inline TuneResult tune_band(const Tensor& band_lr, const Tensor& pan, double wavelength, const NetParams& params_in,
                            std::size_t iterations, const TuningConfig& cfg, std::size_t band_index = 1) {
  if (iterations == 0) throw ValueError("tune_band: iteration count must be at least 1");
  cfg.validate();
  const DecimationSpec dec = cfg.decimation();
  const BandLossContext ctx = make_band_context(band_lr, pan, wavelength, cfg.loss, cfg.mtf);
  const Tensor interp = interpolate_band(band_lr, cfg.mtf.ratio);
  require_same_shape(interp, pan, "tune_band (interpolated band vs PAN)");

  TuneResult res{params_in, {}, {}};
  res.trace.band = band_index;
  res.trace.wavelength = wavelength;
  res.trace.iterations = iterations;
  res.trace.reports.reserve(iterations);

  NetParams last_good = params_in;
  AdamState adam(res.params.block_sizes(), cfg.learning_rate);
  ForwardCache cache;
  for (std::size_t it = 1; it <= iterations; ++it) {
    const Tensor fused = forward(pan, interp, res.params, &cache);
    CombinedLoss c = combined_loss(fused, ctx, cfg.loss, cfg.mtf, dec);
    c.report.iteration = it;
    if (!c.report.finite()) {
      log_warning("band " + std::to_string(band_index) + ": non-finite loss at iteration " + std::to_string(it) +
                  ", keeping the last finite parameters");
      res.trace.aborted = true;
      res.params = last_good;
      break;
    }
    res.trace.reports.push_back(c.report);
    const NetGradients g = backward(cache, res.params, c.grad);
    last_good = res.params;
    adam_update(res.params.blocks(), g.blocks(), adam);
  }
  res.trace.rejected_steps = adam.rejected_steps;

  res.fused = forward(pan, interp, res.params);
  res.trace.final_report = combined_loss(res.fused, ctx, cfg.loss, cfg.mtf, dec).report;
  res.trace.final_report.iteration = res.trace.reports.size();
  if (!res.trace.final_report.finite() && !(res.params == last_good)) {
    log_warning("band " + std::to_string(band_index) + ": non-finite loss after the last update, reverting");
    res.trace.aborted = true;
    res.params = last_good;
    res.fused = forward(pan, interp, res.params);
    res.trace.final_report = combined_loss(res.fused, ctx, cfg.loss, cfg.mtf, dec).report;
    res.trace.final_report.iteration = res.trace.reports.size();
  }
  return res;
}

struct SharpenResult {
  DataCube fused;
  std::vector<BandTrace> traces;        // in processing order
  std::vector<std::size_t> aborted;     // 1-based band indices
  NetParams final_params;
};

using BandProgress = std::function<void(const BandTrace&)>;

/// Sharpens every band, handing the tuned parameters of each band to the next.
/// `reset_each_band` restarts every band from `initial` (the no-propagation baseline).
inline SharpenResult sharpen_cube(const DataCube& cube, const PanImage& pan, const NetParams& initial,
                                  const TuningConfig& cfg, const BandProgress& progress = {},
                                  bool reset_each_band = false) {
  cfg.validate();
  cube.validate();
  validate_pair(cube, pan, cfg.mtf.ratio);
  const std::size_t bands = cube.bands();
  std::vector<std::size_t> order(bands);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.direction == Direction::backward) std::reverse(order.begin(), order.end());

  SharpenResult res;
  res.fused.values = Tensor(bands, pan.height(), pan.width());
  res.fused.wavelengths = cube.wavelengths;
  res.fused.scale = cube.scale;
  res.fused.ratio = cube.ratio;
  res.fused.permutation = cube.permutation;

  NetParams params = initial;
  for (std::size_t k = 0; k < bands; ++k) {
    const std::size_t b = order[k];
    std::size_t n = cfg.first_band_iterations;
    if (k > 0) {
      const double prev = cube.wavelengths[order[k - 1]], cur = cube.wavelengths[b];
      // Backward chains walk down in wavelength; the gap is always positive.
      n = cfg.direction == Direction::forward ? schedule_iterations(k + 1, cur, prev, cfg)
                                              : schedule_iterations(k + 1, prev, cur, cfg);
    }
    TuneResult t = tune_band(cube.band(b), pan.values, cube.wavelengths[b], reset_each_band ? initial : params, n, cfg,
                             b + 1);
    res.fused.values.set_channel(b, t.fused);
    if (t.trace.aborted) res.aborted.push_back(b + 1);
    if (progress) progress(t.trace);
    res.traces.push_back(std::move(t.trace));
    params = std::move(t.params);
  }
  res.final_params = std::move(params);
  return res;
}

/// sharpen_cube on radiometrically normalized inputs; the fused cube is
/// returned in the units of `cube`.
inline SharpenResult sharpen_pair(const DataCube& cube, const PanImage& pan, const NetParams& initial,
                                  const TuningConfig& cfg, const BandProgress& progress = {},
                                  bool reset_each_band = false) {
  const NormalizedPair np = normalize_pair(cube, pan);
  SharpenResult res = sharpen_cube(np.cube, np.pan, initial, cfg, progress, reset_each_band);
  res.fused = denormalize(res.fused, np.scale);
  return res;
}

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainConfig {
  std::size_t patch_size = 240;  // PAN pixels, multiple of R
  std::size_t patch_count = 100;
  std::size_t validation_count = 10;
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  double learning_rate = 1e-5;
  std::uint64_t seed = 0;

  void validate() const {
    if (patch_count < 2) throw ConfigError("pretrain: need at least 2 patches");
    if (validation_count == 0 || validation_count >= patch_count)
      throw ConfigError("pretrain: validation count must be in [1, patch count)");
    if (batch_size == 0) throw ConfigError("pretrain: batch size must be positive");
    if (!(learning_rate >= 0.0)) throw ConfigError("pretrain: learning rate must be non-negative");
  }
};

struct PatchOrigin {
  std::size_t row = 0;  // low-resolution coordinates
  std::size_t col = 0;
};

struct PatchLayout {
  std::size_t patch_size = 0;  // PAN pixels
  std::vector<PatchOrigin> origins;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Places `patch_count` patches on an evenly spread square grid (shrinking the
/// patch size if they would overlap) and splits them with a seeded shuffle.
inline PatchLayout plan_patches(std::size_t lr_height, std::size_t lr_width, const PretrainConfig& pc,
                                std::size_t ratio) {
  pc.validate();
  if (pc.patch_size == 0 || pc.patch_size % ratio != 0)
    throw ConfigError("pretrain: patch size " + std::to_string(pc.patch_size) + " is not a positive multiple of R=" +
                      std::to_string(ratio));
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(pc.patch_count)) - 1e-9));
  std::size_t p = pc.patch_size / ratio;
  const std::size_t fit = std::min(lr_height, lr_width) / side;
  if (side * p > std::min(lr_height, lr_width)) {
    if (fit < 4)
      throw ValueError("pretrain: image " + std::to_string(lr_height) + "x" + std::to_string(lr_width) +
                       " (low resolution) is too small for " + std::to_string(pc.patch_count) + " patches");
    log_warning("pretrain: image too small for " + std::to_string(pc.patch_count) + " patches of " +
                std::to_string(pc.patch_size) + " px; using " + std::to_string(fit * ratio) + " px patches");
    p = fit;
  }
  PatchLayout layout;
  layout.patch_size = p * ratio;
  auto spread = [&](std::size_t i, std::size_t extent) {
    if (side == 1) return std::size_t{0};
    return static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(extent - p) /
                                                 static_cast<double>(side - 1)));
  };
  for (std::size_t k = 0; k < pc.patch_count; ++k)
    layout.origins.push_back({spread(k / side, lr_height), spread(k % side, lr_width)});
  std::vector<std::size_t> idx(pc.patch_count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(pc.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  layout.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(pc.validation_count));
  layout.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(pc.validation_count), idx.end());
  std::sort(layout.validation.begin(), layout.validation.end());
  std::sort(layout.train.begin(), layout.train.end());
  return layout;
}

namespace detail {

inline Tensor crop(const Tensor& t, std::size_t row, std::size_t col, std::size_t size) {
  Tensor out(1, size, size);
  for (std::size_t y = 0; y < size; ++y)
    std::copy_n(t.values().begin() + static_cast<std::ptrdiff_t>((row + y) * t.width() + col), size,
                out.values().begin() + static_cast<std::ptrdiff_t>(y * size));
  return out;
}

struct TrainingPatch {
  Tensor interp;
  BandLossContext ctx;
};

}  // namespace detail

struct PretrainResult {
  NetParams params;                    // best validation loss
  std::vector<double> validation_loss;  // index 0: before training
  std::vector<double> training_loss;    // mean minibatch loss per epoch (index 0 unused)
  std::size_t best_epoch = 0;
  std::size_t patch_size = 0;
};

inline PretrainResult pretrain(const Tensor& band_lr, const Tensor& pan, double wavelength, const NetParams& initial,
                               const PretrainConfig& pc, const TuningConfig& cfg) {
  cfg.validate();
  const std::size_t r = cfg.mtf.ratio;
  if (pan.height() != band_lr.height() * r || pan.width() != band_lr.width() * r)
    throw ShapeError("pretrain: PAN " + pan.shape_string() + " is not R times the band " + band_lr.shape_string());
  const PatchLayout layout = plan_patches(band_lr.height(), band_lr.width(), pc, r);
  const DecimationSpec dec = cfg.decimation();
  const std::size_t p = layout.patch_size / r;

  std::vector<detail::TrainingPatch> patches;
  for (const PatchOrigin& o : layout.origins) {
    Tensor lr = detail::crop(band_lr, o.row, o.col, p);
    Tensor hr = detail::crop(pan, o.row * r, o.col * r, layout.patch_size);
    Tensor interp = interpolate_band(lr, r);
    BandLossContext ctx = make_band_context(lr, hr, wavelength, cfg.loss, cfg.mtf);
    patches.push_back({std::move(interp), std::move(ctx)});
  }

  auto validation_loss = [&](const NetParams& params) {
    double sum = 0;
    for (std::size_t i : layout.validation) {
      const auto& tp = patches[i];
      sum += combined_loss(forward(tp.ctx.pan, tp.interp, params), tp.ctx, cfg.loss, cfg.mtf, dec).report.l_total;
    }
    return sum / static_cast<double>(layout.validation.size());
  };

  PretrainResult res;
  res.patch_size = layout.patch_size;
  res.params = initial;
  res.validation_loss.push_back(validation_loss(initial));
  res.training_loss.push_back(std::nan(""));
  double best = res.validation_loss[0];

  NetParams params = initial;
  AdamState adam(params.block_sizes(), pc.learning_rate);
  std::mt19937_64 rng(pc.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order = layout.train;
  ForwardCache cache;
  for (std::size_t epoch = 1; epoch <= pc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += pc.batch_size) {
      const std::size_t end = std::min(order.size(), start + pc.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      NetGradients sum;
      double batch_loss = 0;
      for (std::size_t j = start; j < end; ++j) {
        const auto& tp = patches[order[j]];
        const Tensor fused = forward(tp.ctx.pan, tp.interp, params, &cache);
        const CombinedLoss c = combined_loss(fused, tp.ctx, cfg.loss, cfg.mtf, dec);
        batch_loss += c.report.l_total * inv;
        const NetGradients g = backward(cache, params, c.grad);
        auto dst = sum.blocks();
        const auto src = g.blocks();
        for (std::size_t b = 0; b < dst.size(); ++b)
          for (std::size_t i = 0; i < dst[b].size(); ++i) dst[b][i] += inv * src[b][i];
      }
      adam_update(params.blocks(), std::as_const(sum).blocks(), adam);
      epoch_loss += batch_loss;
      ++batches;
    }
    res.training_loss.push_back(epoch_loss / static_cast<double>(batches));
    const double v = validation_loss(params);
    res.validation_loss.push_back(v);
    if (v < best) {
      best = v;
      res.best_epoch = epoch;
      res.params = params;
    }
    log_info("pretrain epoch " + std::to_string(epoch) + ": train " + format_double(res.training_loss.back()) +
             ", validation " + format_double(v));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Trace records: one line per iteration, plus one "final" line per band.
//   b=2 lambda=410 iter=3 l_spectral=... l_spatial=... l_total=... beta=...

inline void write_trace(std::ostream& out, const std::vector<BandTrace>& traces) {
  auto line = [&](const BandTrace& t, const std::string& iter, const LossReport& r) {
    out << "b=" << t.band << " lambda=" << format_double(t.wavelength) << " iter=" << iter
        << " l_spectral=" << format_double(r.l_spectral) << " l_spatial=" << format_double(r.l_spatial)
        << " l_total=" << format_double(r.l_total) << " beta=" << format_double(r.beta) << '\n';
  };
  for (const BandTrace& t : traces) {
    for (const LossReport& r : t.reports) line(t, std::to_string(r.iteration), r);
    line(t, "final", t.final_report);
  }
}

/// Parses records written by write_trace.
inline std::vector<BandTrace> read_trace(std::istream& in) {
  std::vector<BandTrace> traces;
  std::string text;
  std::size_t lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (trim(text).empty() || trim(text)[0] == '#') continue;
    std::istringstream fields(text);
    std::string field;
    std::size_t band = 0;
    double lambda = 0;
    std::string iter;
    LossReport r;
    int seen = 0;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw FormatError("trace line " + std::to_string(lineno) + ": expected key=value");
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      const std::string where = "trace line " + std::to_string(lineno) + " " + key;
      try {
        if (key == "b") band = parse_uint(value, where), seen |= 1;
        else if (key == "lambda") lambda = parse_double(value, where), seen |= 2;
        else if (key == "iter") iter = value, seen |= 4;
        else if (key == "l_spectral") r.l_spectral = parse_double(value, where), seen |= 8;
        else if (key == "l_spatial") r.l_spatial = parse_double(value, where), seen |= 16;
        else if (key == "l_total") r.l_total = parse_double(value, where), seen |= 32;
        else if (key == "beta") r.beta = parse_double(value, where);
      } catch (const ConfigError& e) {
        throw FormatError(e.what());
      }
    }
    if (seen != 63) throw FormatError("trace line " + std::to_string(lineno) + ": missing fields");
    if (traces.empty() || traces.back().band != band || traces.back().iterations != 0) {
      BandTrace t;
      t.band = band;
      t.wavelength = lambda;
      traces.push_back(t);
    }
    BandTrace& t = traces.back();
    if (iter == "final") {
      r.iteration = t.reports.size();
      t.final_report = r;
      t.iterations = t.reports.size();
    } else {
      try {
        r.iteration = parse_uint(iter, "iter");
      } catch (const ConfigError& e) {
        throw FormatError("trace line " + std::to_string(lineno) + ": " + e.what());
      }
      t.reports.push_back(r);
    }
  }
  return traces;
}

}  // namespace rpnn
