#pragma once

// Three-layer residual single-band fusion network:
//
//   fused = conv3(relu(conv2(relu(conv1([pan, band_interp]))))) + band_interp
//
// conv1: 2 -> 48, 7x7   conv2: 48 -> 32, 5x5   conv3: 32 -> 1, 3x3

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "rpnn/error.hpp"
#include "rpnn/tensor.hpp"

namespace rpnn {

struct NetParams {
  ConvLayer layer1{2, 48, 7};
  ConvLayer layer2{48, 32, 5};
  ConvLayer layer3{32, 1, 3};

  static constexpr std::size_t kParameterCount = 43473;

  std::size_t parameter_count() const {
    return layer1.parameter_count() + layer2.parameter_count() + layer3.parameter_count();
  }

  /// Parameter blocks in serialization order: kernel then bias, layers 1..3.
  std::array<std::span<double>, 6> blocks() {
    return {layer1.kernel, layer1.bias, layer2.kernel, layer2.bias, layer3.kernel, layer3.bias};
  }
  std::array<std::span<const double>, 6> blocks() const {
    return {layer1.kernel, layer1.bias, layer2.kernel, layer2.bias, layer3.kernel, layer3.bias};
  }

  std::array<std::size_t, 6> block_sizes() const {
    const auto b = blocks();
    return {b[0].size(), b[1].size(), b[2].size(), b[3].size(), b[4].size(), b[5].size()};
  }

  friend bool operator==(const NetParams&, const NetParams&) = default;
};

/// Gradient with the same block layout as NetParams.
using NetGradients = NetParams;

/// He-uniform kernels (bound sqrt(6 / fan_in)), zero biases.
inline NetParams init_params(std::uint64_t seed) {
  NetParams p;
  std::mt19937_64 rng(seed);
  for (ConvLayer* l : {&p.layer1, &p.layer2, &p.layer3}) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l->fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : l->kernel) v = dist(rng);
  }
  return p;
}

/// Intermediate activations kept for the backward pass.
struct ForwardCache {
  Tensor input;  // [pan, band_interp]
  Tensor hidden1;
  Tensor hidden2;
};

inline Tensor forward(const Tensor& pan, const Tensor& band_interp, const NetParams& params,
                      ForwardCache* cache = nullptr) {
  if (pan.channels() != 1 || band_interp.channels() != 1)
    throw ShapeError("forward: expected single-channel PAN and band, got " + pan.shape_string() + " and " +
                     band_interp.shape_string());
  require_same_shape(pan, band_interp, "forward (pan vs interpolated band)");
  Tensor input = concat_channels({&pan, &band_interp});
  Tensor h1 = relu(conv2d_forward(input, params.layer1));
  Tensor h2 = relu(conv2d_forward(h1, params.layer2));
  Tensor out = conv2d_forward(h2, params.layer3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += band_interp[i];
  if (cache != nullptr) {
    cache->input = std::move(input);
    cache->hidden1 = std::move(h1);
    cache->hidden2 = std::move(h2);
  }
  return out;
}

/// Parameter gradients given d loss / d fused.
inline NetGradients backward(const ForwardCache& cache, const NetParams& params, const Tensor& grad_fused) {
  NetGradients g;
  ConvGradients g3 = conv2d_backward(cache.hidden2, params.layer3, grad_fused);
  relu_backward_inplace(cache.hidden2, g3.input);
  ConvGradients g2 = conv2d_backward(cache.hidden1, params.layer2, g3.input);
  relu_backward_inplace(cache.hidden1, g2.input);
  ConvGradients g1 = conv2d_backward(cache.input, params.layer1, g2.input, false);
  g.layer1.kernel = std::move(g1.kernel);
  g.layer1.bias = std::move(g1.bias);
  g.layer2.kernel = std::move(g2.kernel);
  g.layer2.bias = std::move(g2.bias);
  g.layer3.kernel = std::move(g3.kernel);
  g.layer3.bias = std::move(g3.bias);
  return g;
}

// Checkpoint layout (all little-endian):
//   bytes 0-3   "RPNN"
//   bytes 4-7   u32 format version (1)
//   bytes 8-15  u64 parameter count (43473)
//   then float32 values: layer1 kernel, layer1 bias, layer2 kernel, layer2 bias,
//   layer3 kernel, layer3 bias. Kernels are out x in x k x k, row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& buf, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  buf.insert(buf.end(), std::begin(bytes), std::end(bytes));
}

template <class T>
T get_le(const unsigned char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const NetParams& params) {
  std::vector<unsigned char> buf;
  buf.reserve(16 + 4 * params.parameter_count());
  for (char c : {'R', 'P', 'N', 'N'}) buf.push_back(static_cast<unsigned char>(c));
  detail::put_le<std::uint32_t>(buf, kCheckpointVersion);
  detail::put_le<std::uint64_t>(buf, params.parameter_count());
  for (const auto& block : params.blocks())
    for (double v : block) detail::put_le<float>(buf, static_cast<float>(v));
  return buf;
}

inline NetParams decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "RPNN", 4) != 0)
    throw FormatError("checkpoint: missing 'RPNN' magic");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  NetParams p;
  const auto count = detail::get_le<std::uint64_t>(bytes.data() + 8);
  if (count != p.parameter_count())
    throw FormatError("checkpoint: parameter count " + std::to_string(count) + ", expected " +
                      std::to_string(p.parameter_count()));
  const std::size_t expected = 16 + 4 * count;
  if (bytes.size() != expected)
    throw FormatError("checkpoint: expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(bytes.size()));
  const unsigned char* cur = bytes.data() + 16;
  for (auto block : p.blocks())
    for (double& v : block) {
      v = static_cast<double>(detail::get_le<float>(cur));
      cur += 4;
    }
  return p;
}

inline void save_checkpoint(const NetParams& params, const std::string& path) {
  detail::write_file(path, encode_checkpoint(params));
}

inline NetParams load_checkpoint(const std::string& path) { return decode_checkpoint(detail::read_file(path)); }

}  // namespace rpnn
