#pragma once

// RPNC container for hyperspectral cubes and PAN images, plus radiometric
// normalization of a cube/PAN pair.
//
// Layout, little-endian throughout:
//
//   offset  size  field
//        0     4  magic "RPNC"
//        4     4  u32 version (1)
//        8     4  u32 width W
//       12     4  u32 height H
//       16     4  u32 bands B
//       20     4  u32 resolution ratio R
//       24     8  f64 scale (physical value = stored value * scale)
//       32    32  reserved, zero
//       64   4*B  f32 band wavelengths in nm
//   64+4*B  4*B*H*W  f32 samples, band-sequential, row-major within a band
//
// A PAN image is stored as a 1-band file.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "rpnn/error.hpp"
#include "rpnn/network.hpp"
#include "rpnn/parallel.hpp"
#include "rpnn/tensor.hpp"

namespace rpnn {

inline constexpr std::uint32_t kCubeVersion = 1;
inline constexpr std::size_t kCubeHeaderBytes = 64;

struct DataCube {
  Tensor values;                      // B x H x W
  std::vector<double> wavelengths;    // nm, strictly increasing
  double scale = 1.0;                 // physical = values * scale
  std::size_t ratio = 6;
  std::vector<std::size_t> permutation;  // permutation[b] = on-disk index of in-memory band b

  std::size_t bands() const { return values.channels(); }
  std::size_t height() const { return values.height(); }
  std::size_t width() const { return values.width(); }

  Tensor band(std::size_t b) const { return values.channel(b); }

  void validate() const {
    if (wavelengths.size() != values.channels())
      throw ShapeError("DataCube: " + std::to_string(wavelengths.size()) + " wavelengths for " +
                       std::to_string(values.channels()) + " planes");
    for (std::size_t b = 1; b < wavelengths.size(); ++b)
      if (!(wavelengths[b] > wavelengths[b - 1]))
        throw ValueError("DataCube: wavelengths must be strictly increasing (band " + std::to_string(b) + ": " +
                         std::to_string(wavelengths[b - 1]) + " then " + std::to_string(wavelengths[b]) + ")");
    if (!(scale > 0.0)) throw ValueError("DataCube: scale must be positive");
  }

  /// Cube restricted to the listed in-memory band indices, in the given order.
  DataCube subset(const std::vector<std::size_t>& idx) const {
    DataCube out;
    out.values = Tensor(idx.size(), height(), width());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.values.set_channel(i, values.channel(idx[i]));
      out.wavelengths.push_back(wavelengths[idx[i]]);
    }
    out.scale = scale;
    out.ratio = ratio;
    return out;
  }
};

struct PanImage {
  Tensor values;  // 1 x H x W
  double scale = 1.0;
  std::size_t ratio = 6;

  std::size_t height() const { return values.height(); }
  std::size_t width() const { return values.width(); }
};

inline DataCube make_cube(Tensor values, std::vector<double> wavelengths, std::size_t ratio = 6) {
  DataCube c;
  c.values = std::move(values);
  c.wavelengths = std::move(wavelengths);
  c.ratio = ratio;
  c.permutation.resize(c.wavelengths.size());
  std::iota(c.permutation.begin(), c.permutation.end(), std::size_t{0});
  c.validate();
  return c;
}

/// Rejects a cube/PAN pair whose dimension ratio differs from `ratio`.
inline void validate_pair(const DataCube& cube, const PanImage& pan, std::size_t ratio) {
  if (pan.values.channels() != 1) throw ShapeError("PAN must have a single band, got " + pan.values.shape_string());
  if (pan.height() != cube.height() * ratio || pan.width() != cube.width() * ratio)
    throw ShapeError("PAN " + std::to_string(pan.height()) + "x" + std::to_string(pan.width()) + " is not " +
                     std::to_string(ratio) + "x the cube " + std::to_string(cube.height()) + "x" +
                     std::to_string(cube.width()));
}

// ---------------------------------------------------------------------------
// Encoding

namespace detail {

inline std::vector<unsigned char> encode_rpnc(const Tensor& values, const std::vector<double>& wavelengths,
                                              double scale, std::size_t ratio) {
  if (wavelengths.size() != values.channels())
    throw ShapeError("encode_rpnc: wavelength count does not match plane count");
  std::vector<unsigned char> buf;
  buf.reserve(kCubeHeaderBytes + 4 * (wavelengths.size() + values.size()));
  for (char c : {'R', 'P', 'N', 'C'}) buf.push_back(static_cast<unsigned char>(c));
  put_le<std::uint32_t>(buf, kCubeVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(values.width()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(values.height()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(values.channels()));
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(ratio));
  put_le<double>(buf, scale);
  buf.resize(kCubeHeaderBytes, 0);
  for (double wl : wavelengths) put_le<float>(buf, static_cast<float>(wl));
  for (double v : values.values()) put_le<float>(buf, static_cast<float>(v));
  return buf;
}

struct RpncPayload {
  Tensor values;
  std::vector<double> wavelengths;
  double scale = 1.0;
  std::size_t ratio = 0;
};

inline RpncPayload decode_rpnc(std::span<const unsigned char> bytes, const std::string& name) {
  if (bytes.size() < kCubeHeaderBytes)
    throw FormatError(name + ": file holds " + std::to_string(bytes.size()) + " bytes, shorter than the " +
                      std::to_string(kCubeHeaderBytes) + "-byte header");
  if (std::memcmp(bytes.data(), "RPNC", 4) != 0) throw FormatError(name + ": magic mismatch, expected 'RPNC'");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCubeVersion) throw FormatError(name + ": unsupported version " + std::to_string(version));
  const std::size_t w = get_le<std::uint32_t>(bytes.data() + 8);
  const std::size_t h = get_le<std::uint32_t>(bytes.data() + 12);
  const std::size_t b = get_le<std::uint32_t>(bytes.data() + 16);
  RpncPayload out;
  out.ratio = get_le<std::uint32_t>(bytes.data() + 20);
  out.scale = get_le<double>(bytes.data() + 24);
  if (w == 0 || h == 0 || b == 0)
    throw FormatError(name + ": invalid dimensions W=" + std::to_string(w) + " H=" + std::to_string(h) +
                      " B=" + std::to_string(b));
  if (!(out.scale > 0.0) || !std::isfinite(out.scale)) throw FormatError(name + ": scale must be positive and finite");
  const std::size_t expected = kCubeHeaderBytes + 4 * b + 4 * b * h * w;
  if (bytes.size() != expected) {
    const std::size_t payload = bytes.size() > kCubeHeaderBytes + 4 * b ? bytes.size() - kCubeHeaderBytes - 4 * b : 0;
    throw FormatError(name + ": header declares " + std::to_string(b) + " bands of " + std::to_string(h) + "x" +
                      std::to_string(w) + " (expected " + std::to_string(expected) + " bytes) but file holds " +
                      std::to_string(bytes.size()) + " bytes (" + std::to_string(payload / (4 * h * w)) +
                      " complete planes)");
  }
  const unsigned char* cur = bytes.data() + kCubeHeaderBytes;
  out.wavelengths.resize(b);
  for (std::size_t i = 0; i < b; ++i, cur += 4) out.wavelengths[i] = static_cast<double>(get_le<float>(cur));
  out.values = Tensor(b, h, w);
  for (double& v : out.values.values()) {
    v = static_cast<double>(get_le<float>(cur));
    cur += 4;
  }
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_cube(const DataCube& cube) {
  return detail::encode_rpnc(cube.values, cube.wavelengths, cube.scale, cube.ratio);
}

/// Decodes an RPNC cube. Bands are re-sorted by ascending wavelength and the
/// applied permutation is recorded; duplicate or non-finite wavelengths are rejected.
inline DataCube decode_cube(std::span<const unsigned char> bytes, const std::string& name = "cube") {
  auto raw = detail::decode_rpnc(bytes, name);
  for (double wl : raw.wavelengths)
    if (!std::isfinite(wl)) throw FormatError(name + ": non-finite wavelength");
  std::vector<std::size_t> order(raw.wavelengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return raw.wavelengths[a] < raw.wavelengths[b]; });
  for (std::size_t i = 1; i < order.size(); ++i)
    if (raw.wavelengths[order[i]] == raw.wavelengths[order[i - 1]])
      throw FormatError(name + ": duplicate wavelength " + std::to_string(raw.wavelengths[order[i]]) + " nm (bands " +
                        std::to_string(order[i - 1]) + " and " + std::to_string(order[i]) + ")");
  DataCube cube;
  cube.scale = raw.scale;
  cube.ratio = raw.ratio;
  cube.permutation = order;
  cube.values = Tensor(order.size(), raw.values.height(), raw.values.width());
  for (std::size_t i = 0; i < order.size(); ++i) {
    cube.wavelengths.push_back(raw.wavelengths[order[i]]);
    const auto src = raw.values.plane(order[i]);
    std::copy(src.begin(), src.end(), cube.values.plane(i).begin());
  }
  if (!std::is_sorted(order.begin(), order.end()))
    log_info(name + ": bands re-sorted by wavelength");
  return cube;
}

inline DataCube read_cube(const std::string& path) { return decode_cube(detail::read_file(path), path); }

inline void write_cube(const DataCube& cube, const std::string& path) { detail::write_file(path, encode_cube(cube)); }

inline std::vector<unsigned char> encode_pan(const PanImage& pan) {
  return detail::encode_rpnc(pan.values, {0.0}, pan.scale, pan.ratio);
}

inline PanImage decode_pan(std::span<const unsigned char> bytes, const std::string& name = "pan") {
  auto raw = detail::decode_rpnc(bytes, name);
  if (raw.values.channels() != 1)
    throw FormatError(name + ": PAN file must hold 1 band, found " + std::to_string(raw.values.channels()));
  return {std::move(raw.values), raw.scale, raw.ratio};
}

inline PanImage read_pan(const std::string& path) { return decode_pan(detail::read_file(path), path); }

inline void write_pan(const PanImage& pan, const std::string& path) { detail::write_file(path, encode_pan(pan)); }

// ---------------------------------------------------------------------------
// Normalization

/// Nearest-rank percentile (q in [0, 100]).
inline double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw ValueError("percentile: empty input");
  std::vector<double> v(values.begin(), values.end());
  const double pos = std::ceil(q / 100.0 * static_cast<double>(v.size()) - 1e-9);  // 0.999 * 1000 is 999.0000000000001
  const std::size_t rank = std::clamp<std::size_t>(static_cast<std::size_t>(pos), 1, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank), v.end());
  return v[rank];
}

struct NormalizedPair {
  DataCube cube;
  PanImage pan;
  double scale = 1.0;
};

/// Divides cube and PAN by s = max(p99.9(cube), p99.9(pan)).
inline NormalizedPair normalize_pair(const DataCube& cube, const PanImage& pan) {
  validate_pair(cube, pan, cube.ratio);
  const double s = std::max(percentile(cube.values.values(), 99.9), percentile(pan.values.values(), 99.9));
  if (!(s > 0.0)) throw ValueError("normalize_pair: inputs are all zero (or non-positive); cannot normalize");
  NormalizedPair out{cube, pan, s};
  for (double& v : out.cube.values.values()) v /= s;
  for (double& v : out.pan.values.values()) v /= s;
  out.cube.scale = cube.scale * s;
  out.pan.scale = pan.scale * s;
  const auto over = [](const Tensor& t) {
    return std::any_of(t.values().begin(), t.values().end(), [](double v) { return v > 1.5; });
  };
  if (over(out.cube.values) || over(out.pan.values))
    log_warning("normalize_pair: normalized values exceed 1.5 (hot pixels above the 99.9th percentile)");
  return out;
}

inline void denormalize(Tensor& values, double s) {
  for (double& v : values.values()) v *= s;
}

/// Inverse of normalize_pair for a cube: values back to the original units.
inline DataCube denormalize(const DataCube& cube, double s) {
  DataCube out = cube;
  denormalize(out.values, s);
  out.scale = cube.scale / s;
  return out;
}

}  // namespace rpnn
