#pragma once

// Command-line front end. Every subcommand reads RPNC/checkpoint/trace files,
// runs one pipeline stage and writes either files (with a manifest next to
// each) or a key=value report on stdout.
//
//   rpnn synth     --gt-out gt.rpnc --pan-out pan.rpnc
//   rpnn degrade   --gt gt.rpnc --pan pan.rpnc --hs-out hs.rpnc --pan-out pan_rr.rpnc --gt-out gt_rr.rpnc
//   rpnn pretrain  --hs hs.rpnc --pan pan.rpnc --out phi0.ckpt
//   rpnn sharpen   --hs hs.rpnc --pan pan.rpnc --checkpoint phi0.ckpt --out fused.rpnc --trace trace.txt
//   rpnn eval-rr   --fused fused.rpnc --gt gt.rpnc
//   rpnn eval-fr   --fused fused.rpnc --pan pan.rpnc --hs hs.rpnc
//   rpnn trace-plot --trace trace.txt
//
// Failures print one line "error: <class>: <message>" on stderr and return a
// nonzero status (2 for command-line misuse, 1 otherwise).

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rpnn/config.hpp"
#include "rpnn/cube.hpp"
#include "rpnn/error.hpp"
#include "rpnn/metrics.hpp"
#include "rpnn/network.hpp"
#include "rpnn/parallel.hpp"
#include "rpnn/rolling.hpp"
#include "rpnn/synth.hpp"
#include "rpnn/text.hpp"

namespace rpnn {

inline constexpr const char* kVersion = "1.0.0";

/// What a run did: subcommand, effective configuration, files, timing.
struct RunManifest {
  std::string subcommand;
  RunConfig config;
  std::vector<std::pair<std::string, std::string>> inputs, outputs;  // role, path
  double elapsed_s = 0.0;

  KeyValues to_key_values() const {
    KeyValues kv = rpnn::to_key_values(config);
    kv["manifest.subcommand"] = subcommand;
    kv["manifest.version"] = kVersion;
    kv["manifest.seed"] = std::to_string(config.seed);
    kv["manifest.elapsed_s"] = format_double(elapsed_s);
    for (const auto& [role, path] : inputs) kv["manifest.input." + role] = path;
    for (const auto& [role, path] : outputs) kv["manifest.output." + role] = path;
    return kv;
  }
};

/// Manifest path for an output file.
inline std::string manifest_path(const std::string& output) { return output + ".manifest"; }

inline void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << "# rpnn run manifest; usable as --config to repeat the run\n";
  write_key_values(out, m.to_key_values());
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Columnar view of trace records, one row per iteration (final rows use iter=-1).
inline void write_trace_columns(std::ostream& out, const std::vector<BandTrace>& traces) {
  out << "band lambda_nm iter l_spectral l_spatial l_total beta\n";
  for (const BandTrace& t : traces) {
    auto row = [&](long iter, const LossReport& r) {
      out << t.band << ' ' << format_double(t.wavelength) << ' ' << iter << ' ' << format_double(r.l_spectral) << ' '
          << format_double(r.l_spatial) << ' ' << format_double(r.l_total) << ' ' << format_double(r.beta) << '\n';
    };
    for (const LossReport& r : t.reports) row(static_cast<long>(r.iteration), r);
    row(-1, t.final_report);
  }
}

namespace detail {

// Flag values kept as optionals so only the flags actually given override the config file.
struct CommonFlags {
  std::string config_path;
  std::optional<double> alpha, lr, beta_overlap, beta_nonoverlap, mtf_gain;
  std::optional<std::size_t> sigma;
  std::optional<std::string> rho_max, pan_band, direction;
  std::optional<std::uint64_t> seed;
};

inline void add_common_flags(CLI::App& app, CommonFlags& f) {
  app.add_option("--config", f.config_path, "key = value configuration file (flags override it)");
  app.add_option("--alpha", f.alpha, "iterations per nm of wavelength gap");
  app.add_option("--lr", f.lr, "tuning learning rate");
  app.add_option("--beta-overlap", f.beta_overlap, "spatial weight for bands inside the PAN bandwidth");
  app.add_option("--beta-nonoverlap", f.beta_nonoverlap, "spatial weight for bands outside the PAN bandwidth");
  app.add_option("--sigma", f.sigma, "correlation window size (PAN pixels)");
  app.add_option("--rho-max", f.rho_max, "correlation ceiling: const or estimated")
      ->check(CLI::IsMember({"const", "estimated"}));
  app.add_option("--pan-band", f.pan_band, "PAN bandwidth as lo,hi in nm");
  app.add_option("--mtf-gain", f.mtf_gain, "MTF gain at Nyquist");
  app.add_option("--seed", f.seed, "seed for network initialization and scene synthesis");
  app.add_option("--direction", f.direction, "band order: forward or backward")
      ->check(CLI::IsMember({"forward", "backward"}));
}

inline RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path);
  KeyValues kv;
  if (f.alpha) kv["tuning.alpha"] = format_double(*f.alpha);
  if (f.lr) kv["tuning.learning_rate"] = format_double(*f.lr);
  if (f.beta_overlap) kv["loss.beta_overlap"] = format_double(*f.beta_overlap);
  if (f.beta_nonoverlap) kv["loss.beta_non_overlap"] = format_double(*f.beta_nonoverlap);
  if (f.sigma) kv["loss.sigma"] = std::to_string(*f.sigma);
  if (f.rho_max) kv["loss.rho_max"] = *f.rho_max;
  if (f.pan_band) kv["loss.pan_band"] = *f.pan_band;
  if (f.mtf_gain) kv["mtf.nyquist_gain"] = format_double(*f.mtf_gain);
  if (f.direction) kv["tuning.direction"] = *f.direction;
  if (f.seed) {
    kv["run.seed"] = std::to_string(*f.seed);
    kv["scene.seed"] = std::to_string(*f.seed);
  }
  apply_config(kv, cfg);
  cfg.tuning.validate();
  return cfg;
}

inline NetParams initial_params(const std::string& checkpoint, const RunConfig& cfg) {
  return checkpoint.empty() ? init_params(cfg.seed) : load_checkpoint(checkpoint);
}

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

inline void emit_report(const MetricsReport& r, const std::string& out_path, RunManifest& m, std::ostream& out,
                        const Timer& timer) {
  if (out_path.empty()) {
    write_report(out, r);
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw IoError("cannot write report '" + out_path + "'");
  write_report(f, r);
  if (!f) throw IoError("write failed for '" + out_path + "'");
  m.outputs.push_back({"report", out_path});
  m.elapsed_s = timer.seconds();
  write_manifest(m, manifest_path(out_path));
}

inline std::vector<BandTrace> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace '" + path + "'");
  return read_trace(in);
}

}  // namespace detail

/// Runs one subcommand. Returns the process exit status.
inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"R-PNN band-wise hyperspectral pansharpening", "rpnn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  detail::CommonFlags flags;
  std::string gt, pan, hs, fused, checkpoint, trace, out_path, gt_out, pan_out, hs_out;
  std::optional<std::size_t> size, epochs, patch_size, patch_count, batch_size;
  std::optional<double> pretrain_lr;
  std::size_t band = 1;
  bool reset = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic HR cube and PAN");
  detail::add_common_flags(*synth, flags);
  synth->add_option("--gt-out", gt_out, "output cube")->required();
  synth->add_option("--pan-out", pan_out, "output PAN")->required();
  synth->add_option("--size", size, "height and width of the scene");

  auto* degrade_cmd = app.add_subcommand("degrade", "Wald protocol: reduced-resolution inputs with known GT");
  detail::add_common_flags(*degrade_cmd, flags);
  degrade_cmd->add_option("--gt", gt, "HR cube")->required()->check(CLI::ExistingFile);
  degrade_cmd->add_option("--pan", pan, "PAN at the GT size (kept) or R times finer (degraded)")
      ->required()
      ->check(CLI::ExistingFile);
  degrade_cmd->add_option("--hs-out", hs_out, "degraded cube")->required();
  degrade_cmd->add_option("--pan-out", pan_out, "PAN used with the degraded cube")->required();
  degrade_cmd->add_option("--gt-out", gt_out, "copy of the reference cube");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "patch pretraining of the initial parameters");
  detail::add_common_flags(*pretrain_cmd, flags);
  pretrain_cmd->add_option("--hs", hs, "low-resolution cube")->required()->check(CLI::ExistingFile);
  pretrain_cmd->add_option("--pan", pan, "PAN")->required()->check(CLI::ExistingFile);
  pretrain_cmd->add_option("--band", band, "1-based band used for training")->check(CLI::PositiveNumber);
  pretrain_cmd->add_option("--checkpoint", checkpoint, "starting parameters (default: random init from --seed)");
  pretrain_cmd->add_option("--epochs", epochs, "training epochs");
  pretrain_cmd->add_option("--patch-size", patch_size, "patch size in PAN pixels");
  pretrain_cmd->add_option("--patch-count", patch_count, "number of patches");
  pretrain_cmd->add_option("--batch-size", batch_size, "patches per minibatch");
  pretrain_cmd->add_option("--pretrain-lr", pretrain_lr, "pretraining learning rate");
  pretrain_cmd->add_option("--out", out_path, "output checkpoint")->required();

  auto* sharpen_cmd = app.add_subcommand("sharpen", "band-wise sharpening with parameter propagation");
  detail::add_common_flags(*sharpen_cmd, flags);
  sharpen_cmd->add_option("--hs", hs, "low-resolution cube")->required()->check(CLI::ExistingFile);
  sharpen_cmd->add_option("--pan", pan, "PAN")->required()->check(CLI::ExistingFile);
  sharpen_cmd->add_option("--checkpoint", checkpoint, "initial parameters (default: random init from --seed)")
      ->check(CLI::ExistingFile);
  sharpen_cmd->add_option("--out", out_path, "fused cube")->required();
  sharpen_cmd->add_option("--trace", trace, "per-iteration loss records");
  sharpen_cmd->add_flag("--reset", reset, "restart every band from the initial parameters (no propagation)");

  auto* eval_rr = app.add_subcommand("eval-rr", "reduced-resolution indexes against a reference");
  detail::add_common_flags(*eval_rr, flags);
  eval_rr->add_option("--fused", fused, "fused cube")->required()->check(CLI::ExistingFile);
  eval_rr->add_option("--gt", gt, "reference cube")->required()->check(CLI::ExistingFile);
  eval_rr->add_option("--out", out_path, "report file (default: stdout)");

  auto* eval_fr = app.add_subcommand("eval-fr", "no-reference full-resolution indexes");
  detail::add_common_flags(*eval_fr, flags);
  eval_fr->add_option("--fused", fused, "fused cube")->required()->check(CLI::ExistingFile);
  eval_fr->add_option("--pan", pan, "PAN")->required()->check(CLI::ExistingFile);
  eval_fr->add_option("--hs", hs, "low-resolution cube")->required()->check(CLI::ExistingFile);
  eval_fr->add_option("--out", out_path, "report file (default: stdout)");

  auto* plot = app.add_subcommand("trace-plot", "trace records as whitespace-separated columns");
  plot->add_option("--trace", trace, "trace file from sharpen")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", out_path, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "error: usage_error: " << msg << '\n';
    const CLI::App* shown = &app;
    for (const CLI::App* sub : app.get_subcommands()) shown = sub;
    err << shown->help();
    return 2;
  }

  try {
    configure_threads();
    detail::Timer timer;
    RunConfig cfg = detail::resolve_config(flags);
    RunManifest m;
    m.subcommand = app.get_subcommands().front()->get_name();
    const TuningConfig& tc = cfg.tuning;
    const DecimationSpec dec = tc.decimation();

    if (*synth) {
      if (size) cfg.scene.height = cfg.scene.width = *size;
      m.config = cfg;
      const Scene scene = generate_scene(cfg.scene);
      write_cube(scene.gt, gt_out);
      write_pan(scene.pan, pan_out);
      m.outputs = {{"gt", gt_out}, {"pan", pan_out}};
      m.elapsed_s = timer.seconds();
      write_manifest(m, manifest_path(gt_out));
    } else if (*degrade_cmd) {
      m.config = cfg;
      const WaldInputs w = wald_degrade(read_cube(gt), read_pan(pan), tc.mtf, dec);
      write_cube(w.hs, hs_out);
      write_pan(w.pan, pan_out);
      m.inputs = {{"gt", gt}, {"pan", pan}};
      m.outputs = {{"hs", hs_out}, {"pan", pan_out}};
      if (!gt_out.empty()) {
        write_cube(w.gt, gt_out);
        m.outputs.push_back({"gt", gt_out});
      }
      m.elapsed_s = timer.seconds();
      write_manifest(m, manifest_path(hs_out));
    } else if (*pretrain_cmd) {
      if (epochs) cfg.pretrain.epochs = *epochs;
      if (patch_size) cfg.pretrain.patch_size = *patch_size;
      if (patch_count) cfg.pretrain.patch_count = *patch_count;
      if (batch_size) cfg.pretrain.batch_size = *batch_size;
      if (pretrain_lr) cfg.pretrain.learning_rate = *pretrain_lr;
      m.config = cfg;
      const DataCube cube = read_cube(hs);
      if (band > cube.bands())
        throw ValueError("--band " + std::to_string(band) + " exceeds the cube's " + std::to_string(cube.bands()) +
                         " bands");
      const NormalizedPair np = normalize_pair(cube, read_pan(pan));
      const PretrainResult r = pretrain(np.cube.band(band - 1), np.pan.values, np.cube.wavelengths[band - 1],
                                        detail::initial_params(checkpoint, cfg), cfg.pretrain, tc);
      save_checkpoint(r.params, out_path);
      m.inputs = {{"hs", hs}, {"pan", pan}};
      if (!checkpoint.empty()) m.inputs.push_back({"checkpoint", checkpoint});
      m.outputs = {{"checkpoint", out_path}};
      m.elapsed_s = timer.seconds();
      write_manifest(m, manifest_path(out_path));
      out << "best_epoch=" << r.best_epoch << "\nvalidation_loss=" << format_double(r.validation_loss[r.best_epoch])
          << "\npatch_size=" << r.patch_size << '\n';
    } else if (*sharpen_cmd) {
      m.config = cfg;
      const SharpenResult r = sharpen_pair(read_cube(hs), read_pan(pan), detail::initial_params(checkpoint, cfg), tc,
                                           {}, reset);
      write_cube(r.fused, out_path);
      m.inputs = {{"hs", hs}, {"pan", pan}};
      if (!checkpoint.empty()) m.inputs.push_back({"checkpoint", checkpoint});
      m.outputs = {{"fused", out_path}};
      if (!trace.empty()) {
        std::ofstream t(trace);
        if (!t) throw IoError("cannot write trace '" + trace + "'");
        write_trace(t, r.traces);
        m.outputs.push_back({"trace", trace});
      }
      m.elapsed_s = timer.seconds();
      write_manifest(m, manifest_path(out_path));
      std::string aborted;
      for (std::size_t b : r.aborted) aborted += (aborted.empty() ? "" : ",") + std::to_string(b);
      out << "bands=" << r.fused.bands() << "\naborted=" << aborted << '\n';
    } else if (*eval_rr) {
      m.config = cfg;
      m.inputs = {{"fused", fused}, {"gt", gt}};
      const DataCube f = read_cube(fused), g = read_cube(gt);
      detail::emit_report(reduced_resolution_report(f.values, g.values, tc.mtf.ratio), out_path, m, out, timer);
    } else if (*eval_fr) {
      m.config = cfg;
      m.inputs = {{"fused", fused}, {"pan", pan}, {"hs", hs}};
      const DataCube f = read_cube(fused), h = read_cube(hs);
      const PanImage p = read_pan(pan);
      detail::emit_report(full_resolution_report(f.values, p.values, h.values, tc.mtf, dec), out_path, m, out, timer);
    } else if (*plot) {
      const auto traces = detail::load_trace(trace);
      if (out_path.empty()) {
        write_trace_columns(out, traces);
      } else {
        std::ofstream f(out_path);
        if (!f) throw IoError("cannot write '" + out_path + "'");
        write_trace_columns(f, traces);
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.error_class() << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: internal_error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace rpnn
