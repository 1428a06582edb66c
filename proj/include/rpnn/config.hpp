#pragma once

// Flat key-value run configuration:
//
//   # comment
//   tuning.alpha = 1.5
//   loss.pan_band = 400,700
//
// Keys are namespaced by the structure they bind to (tuning., loss., mtf.,
// scene., pretrain., run.). Keys under manifest. are informational and ignored
// on load, so a run manifest can be fed back as a config file.

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rpnn/error.hpp"
#include "rpnn/loss.hpp"
#include "rpnn/rolling.hpp"
#include "rpnn/synth.hpp"
#include "rpnn/text.hpp"

namespace rpnn {

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in, const std::string& name = "config") {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (key.empty()) throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

inline KeyValues parse_key_values(const std::string& text, const std::string& name = "config") {
  std::istringstream in(text);
  return parse_key_values(in, name);
}

inline void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

struct RunConfig {
  TuningConfig tuning;
  SceneSpec scene;
  PretrainConfig pretrain;
  std::uint64_t seed = 0;  // network initialization
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

inline std::vector<double> parse_doubles(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_double(part, key));
  return out;
}

inline std::pair<double, double> parse_range(const std::string& s, const std::string& key) {
  const auto v = parse_doubles(s, key);
  if (v.size() != 2) throw ConfigError(key + ": expected 'lo,hi', got '" + s + "'");
  return {v[0], v[1]};
}

struct Binding {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Binding size_binding(T RunConfig::*part, std::size_t T::*field) {
  return {[=](const RunConfig& c) { return std::to_string(c.*part.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) {
            c.*part.*field = static_cast<std::size_t>(parse_uint(v, k));
          }};
}

template <class T>
Binding double_binding(T RunConfig::*part, double T::*field) {
  return {[=](const RunConfig& c) { return format_double(c.*part.*field); },
          [=](RunConfig& c, const std::string& v, const std::string& k) { c.*part.*field = parse_double(v, k); }};
}

inline const std::map<std::string, Binding>& bindings() {
  using R = RunConfig;
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
    t["tuning.alpha"] = double_binding(&R::tuning, &TuningConfig::alpha);
    t["tuning.first_band_iterations"] = size_binding(&R::tuning, &TuningConfig::first_band_iterations);
    t["tuning.max_iterations"] = size_binding(&R::tuning, &TuningConfig::max_iterations);
    t["tuning.learning_rate"] = double_binding(&R::tuning, &TuningConfig::learning_rate);
    t["tuning.direction"] = {[](const R& c) { return to_string(c.tuning.direction); },
                             [](R& c, const std::string& v, const std::string&) {
                               c.tuning.direction = parse_direction(v);
                             }};
    t["loss.beta_overlap"] = {[](const R& c) { return format_double(c.tuning.loss.beta_overlap); },
                              [](R& c, const std::string& v, const std::string& k) {
                                c.tuning.loss.beta_overlap = parse_double(v, k);
                              }};
    t["loss.beta_non_overlap"] = {[](const R& c) { return format_double(c.tuning.loss.beta_non_overlap); },
                                  [](R& c, const std::string& v, const std::string& k) {
                                    c.tuning.loss.beta_non_overlap = parse_double(v, k);
                                  }};
    t["loss.sigma"] = {[](const R& c) { return std::to_string(c.tuning.loss.window); },
                       [](R& c, const std::string& v, const std::string& k) {
                         c.tuning.loss.window = static_cast<std::size_t>(parse_uint(v, k));
                       }};
    t["loss.rho_max"] = {[](const R& c) { return to_string(c.tuning.loss.rho_max_mode); },
                         [](R& c, const std::string& v, const std::string&) {
                           c.tuning.loss.rho_max_mode = parse_rho_max_mode(v);
                         }};
    t["loss.rho_max_window_factor"] = {[](const R& c) { return std::to_string(c.tuning.loss.rho_max_window_factor); },
                                       [](R& c, const std::string& v, const std::string& k) {
                                         c.tuning.loss.rho_max_window_factor = static_cast<std::size_t>(parse_uint(v, k));
                                       }};
    t["loss.pan_band"] = {[](const R& c) { return join_doubles({c.tuning.loss.pan_band_lo, c.tuning.loss.pan_band_hi}); },
                          [](R& c, const std::string& v, const std::string& k) {
                            std::tie(c.tuning.loss.pan_band_lo, c.tuning.loss.pan_band_hi) = parse_range(v, k);
                          }};
    t["mtf.ratio"] = {[](const R& c) { return std::to_string(c.tuning.mtf.ratio); },
                      [](R& c, const std::string& v, const std::string& k) {
                        c.tuning.mtf.ratio = static_cast<std::size_t>(parse_uint(v, k));
                      }};
    t["mtf.nyquist_gain"] = {[](const R& c) { return format_double(c.tuning.mtf.nyquist_gain); },
                             [](R& c, const std::string& v, const std::string& k) {
                               c.tuning.mtf.nyquist_gain = parse_double(v, k);
                             }};
    t["mtf.half_width"] = {[](const R& c) { return std::to_string(c.tuning.mtf.half_width); },
                           [](R& c, const std::string& v, const std::string& k) {
                             c.tuning.mtf.half_width = static_cast<std::size_t>(parse_uint(v, k));
                           }};
    t["scene.height"] = size_binding(&R::scene, &SceneSpec::height);
    t["scene.width"] = size_binding(&R::scene, &SceneSpec::width);
    t["scene.wavelengths"] = {[](const R& c) { return join_doubles(c.scene.wavelengths); },
                              [](R& c, const std::string& v, const std::string& k) {
                                c.scene.wavelengths = parse_doubles(v, k);
                              }};
    t["scene.endmembers"] = size_binding(&R::scene, &SceneSpec::endmembers);
    t["scene.smoothness"] = double_binding(&R::scene, &SceneSpec::smoothness);
    t["scene.shapes"] = size_binding(&R::scene, &SceneSpec::shapes);
    t["scene.noise"] = double_binding(&R::scene, &SceneSpec::noise);
    t["scene.pan_detail"] = double_binding(&R::scene, &SceneSpec::pan_detail);
    t["scene.feature_amplitude"] = double_binding(&R::scene, &SceneSpec::feature_amplitude);
    t["scene.pan_band"] = {[](const R& c) { return join_doubles({c.scene.pan_band_lo, c.scene.pan_band_hi}); },
                           [](R& c, const std::string& v, const std::string& k) {
                             std::tie(c.scene.pan_band_lo, c.scene.pan_band_hi) = parse_range(v, k);
                           }};
    t["scene.ratio"] = size_binding(&R::scene, &SceneSpec::ratio);
    t["scene.seed"] = {[](const R& c) { return std::to_string(c.scene.seed); },
                       [](R& c, const std::string& v, const std::string& k) { c.scene.seed = parse_uint(v, k); }};
    t["pretrain.patch_size"] = size_binding(&R::pretrain, &PretrainConfig::patch_size);
    t["pretrain.patch_count"] = size_binding(&R::pretrain, &PretrainConfig::patch_count);
    t["pretrain.validation_count"] = size_binding(&R::pretrain, &PretrainConfig::validation_count);
    t["pretrain.epochs"] = size_binding(&R::pretrain, &PretrainConfig::epochs);
    t["pretrain.batch_size"] = size_binding(&R::pretrain, &PretrainConfig::batch_size);
    t["pretrain.learning_rate"] = double_binding(&R::pretrain, &PretrainConfig::learning_rate);
    t["pretrain.seed"] = {[](const R& c) { return std::to_string(c.pretrain.seed); },
                          [](R& c, const std::string& v, const std::string& k) { c.pretrain.seed = parse_uint(v, k); }};
    t["run.seed"] = {[](const R& c) { return std::to_string(c.seed); },
                     [](R& c, const std::string& v, const std::string& k) { c.seed = parse_uint(v, k); }};
    return t;
  }();
  return table;
}

}  // namespace detail

/// Applies every entry to `cfg`. Unknown keys are rejected; manifest.* keys are skipped.
inline void apply_config(const KeyValues& kv, RunConfig& cfg) {
  const auto& table = detail::bindings();
  for (const auto& [key, value] : kv) {
    if (key.rfind("manifest.", 0) == 0) continue;
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, value, key);
  }
}

inline KeyValues to_key_values(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& [key, b] : detail::bindings()) kv[key] = b.get(cfg);
  return kv;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  RunConfig cfg;
  apply_config(parse_key_values(in, path), cfg);
  return cfg;
}

}  // namespace rpnn
