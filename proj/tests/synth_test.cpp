#include <gtest/gtest.h>

#include <algorithm>

#include "rpnn/metrics.hpp"
#include "rpnn/synth.hpp"
#include "test_support.hpp"

namespace rpnn {
namespace {

SceneSpec small_spec(std::uint64_t seed = 0) {
  SceneSpec s;
  s.height = s.width = 96;
  s.seed = seed;
  return s;
}

TEST(SceneSpec, Validation) {
  SceneSpec s = small_spec();
  s.height = 100;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.wavelengths = {500, 500};
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.wavelengths = {900, 1000};
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.endmembers = 0;
  EXPECT_THROW(generate_scene(s), ConfigError);
  s = small_spec();
  s.feature_amplitude = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(DefaultWavelengths, MixGapsSoBothScheduleBranchesOccur) {
  const auto wl = default_wavelengths();
  ASSERT_EQ(wl.size(), 16u);
  bool linear = false, capped = false;
  for (std::size_t i = 1; i < wl.size(); ++i) {
    const double gap = wl[i] - wl[i - 1];
    linear |= 1.5 * gap < 80;
    capped |= 1.5 * gap >= 80;
  }
  EXPECT_TRUE(linear);
  EXPECT_TRUE(capped);
}

TEST(GenerateScene, DeterministicAndBounded) {
  const Scene a = generate_scene(small_spec(3)), b = generate_scene(small_spec(3)), c = generate_scene(small_spec(4));
  EXPECT_EQ(a.gt.values, b.gt.values);
  EXPECT_EQ(a.pan.values, b.pan.values);
  EXPECT_FALSE(a.gt.values == c.gt.values);
  for (double v : a.gt.values.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a.gt.bands(), 16u);
  EXPECT_EQ(a.pan.values.height(), 96u);
}

TEST(GenerateScene, PanIsMeanOfInBandBands) {
  const Scene s = generate_scene(small_spec(1));
  // 400..550 nm bands are the first 8 of the default grid.
  for (std::size_t i = 0; i < s.pan.values.size(); i += 37) {
    double m = 0;
    for (std::size_t b = 0; b < 8; ++b) m += s.gt.values[b * s.pan.values.size() + i];
    EXPECT_NEAR(s.pan.values[i], m / 8, 1e-12);
  }
}

TEST(GenerateScene, RankOneScene) {
  SceneSpec spec = small_spec(2);
  spec.endmembers = 1;
  const Scene s = generate_scene(spec);
  const auto m = band_correlation_matrix(s.gt.values);
  for (const auto& row : m)
    for (double v : row) EXPECT_NEAR(v, 1.0, 1e-9);
}

// Without spectral features every endmember is flat, so all bands coincide.
TEST(GenerateScene, ZeroFeatureAmplitudeGivesIdenticalBands) {
  SceneSpec spec = small_spec(3);
  spec.feature_amplitude = 0.0;
  const Scene s = generate_scene(spec);
  for (std::size_t b = 1; b < s.gt.bands(); ++b)
    EXPECT_TRUE(std::ranges::equal(s.gt.values.plane(b), s.gt.values.plane(0))) << b;
}

TEST(GenerateScene, FeatureAmplitudeLowersPanCorrelation) {
  double prev = 1.0;
  for (double amp : {0.2, 0.5, 0.8}) {
    SceneSpec spec = small_spec(1);
    spec.feature_amplitude = amp;
    const Scene s = generate_scene(spec);
    double lowest = 1.0;
    for (std::size_t b = 0; b < s.gt.bands(); ++b)
      lowest = std::min(lowest, detail::global_cc(s.gt.values.plane(b), s.pan.values.values()));
    EXPECT_LT(lowest, prev) << amp;
    prev = lowest;
  }
}

TEST(GenerateScene, AdjacentBandsMostCorrelated) {
  // Only equally spaced triples: across a wavelength gap "adjacent" says nothing.
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SceneSpec spec = small_spec(seed);
    const Scene s = generate_scene(spec);
    const auto m = band_correlation_matrix(s.gt.values);
    const auto& wl = spec.wavelengths;
    std::size_t checked = 0;
    for (std::size_t b = 0; b + 2 < m.size(); ++b) {
      if (wl[b + 1] - wl[b] != wl[b + 2] - wl[b + 1]) continue;
      ++checked;
      EXPECT_GE(m[b][b + 1], m[b][b + 2] - 1e-12) << "seed " << seed << " band " << b;
    }
    EXPECT_EQ(checked, 8u);
  }
}

TEST(GenerateScene, NoiseKeepsNonNegative) {
  SceneSpec spec = small_spec(5);
  spec.noise = 0.2;
  const Scene s = generate_scene(spec);
  for (double v : s.gt.values.values()) EXPECT_GE(v, 0.0);
  for (double v : s.pan.values.values()) EXPECT_GE(v, 0.0);
}

TEST(WaldDegrade, ConstantAndRoundTrip) {
  const MtfFilterSpec spec;
  const DecimationSpec dec;
  const DataCube gt = make_cube(Tensor(2, 48, 48, 0.4), {500, 600});
  const PanImage pan{Tensor(1, 48, 48, 0.4), 1.0, 6};
  const WaldInputs w = wald_degrade(gt, pan, spec, dec);
  EXPECT_EQ(w.hs.height(), 8u);
  for (double v : w.hs.values.values()) EXPECT_NEAR(v, 0.4, 1e-12);
  EXPECT_EQ(w.pan.values, pan.values);

  SceneSpec def;  // default 384x384: shapes span several low-resolution pixels
  def.seed = 6;
  const Scene s = generate_scene(def);
  const WaldInputs ws = wald_degrade(s.gt, s.pan, spec, dec);
  EXPECT_LT(test::mean_relative_l1(degrade(exp_baseline(ws.hs).values, spec, dec), ws.hs.values), 0.02);
}

TEST(WaldDegrade, FinerPanIsDegradedAndBadPanRejected) {
  const MtfFilterSpec spec;
  const DecimationSpec dec;
  const DataCube gt = make_cube(test::random_tensor(1, 12, 12, 1, 0, 1), {500});
  const PanImage fine{test::random_tensor(1, 72, 72, 2, 0, 1), 1.0, 6};
  const WaldInputs w = wald_degrade(gt, fine, spec, dec);
  EXPECT_EQ(w.pan.values, degrade(fine.values, spec, dec));
  EXPECT_THROW(wald_degrade(gt, PanImage{Tensor(1, 20, 20), 1.0, 6}, spec, dec), ShapeError);
}

TEST(WaldDegrade, CommutesWithBandSelection) {
  const Scene s = generate_scene(small_spec(7));
  const WaldInputs all = wald_degrade(s.gt, s.pan, MtfFilterSpec{}, DecimationSpec{});
  const WaldInputs sub = wald_degrade(s.gt.subset({2, 9}), s.pan, MtfFilterSpec{}, DecimationSpec{});
  EXPECT_EQ(sub.hs.values.channel(0), all.hs.values.channel(2));
  EXPECT_EQ(sub.hs.values.channel(1), all.hs.values.channel(9));
}

}  // namespace
}  // namespace rpnn
