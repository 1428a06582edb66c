#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rpnn/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_support.hpp"

namespace rpnn {
namespace {

const MtfFilterSpec kSpec{};
const DecimationSpec kDec{};

using namespace test;

TEST(Sam, IdentityScalingAndHandCase) {
  const Tensor g = test::random_tensor(4, 8, 8, 1, 0.1, 1.0);
  EXPECT_NEAR(sam(g, g), 0.0, 1e-6);
  Tensor f = g;
  for (double& v : f.values()) v *= 3.0;
  EXPECT_NEAR(sam(f, g), 0.0, 1e-6);
  Tensor v(2, 1, 1), w(2, 1, 1);
  v[0] = 1;
  w[0] = 1;
  w[1] = 1;
  EXPECT_NEAR(sam(v, w), 45.0, 1e-12);
  EXPECT_THROW(sam(v, Tensor(3, 1, 1)), ShapeError);
}

TEST(Sam, SkipsZeroSpectra) {
  Tensor v(2, 1, 2), w(2, 1, 2);
  v(0, 0, 0) = 1;
  w(0, 0, 0) = 1;
  w(1, 0, 0) = 1;
  std::size_t skipped = 0;
  EXPECT_NEAR(sam(v, w, &skipped), 45.0, 1e-12);
  EXPECT_EQ(skipped, 1u);
}

TEST(Ergas, ClosedFormAndHomogeneity) {
  Tensor g(1, 4, 4, 2.0), f(1, 4, 4, 2.0 + 0.12);  // RMSE = 0.06 * mean
  EXPECT_NEAR(ergas(f, g, 6), 1.0, 1e-12);
  EXPECT_EQ(ergas(g, g, 6), 0.0);
  const Tensor gt = test::random_tensor(3, 8, 8, 2, 0.5, 1.0);
  Tensor e1 = gt, e2 = gt;
  const Tensor noise = test::random_tensor(3, 8, 8, 3, -0.1, 0.1);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    e1[i] += noise[i];
    e2[i] += 2 * noise[i];
  }
  EXPECT_NEAR(ergas(e2, gt), 2 * ergas(e1, gt), 1e-12);
}

TEST(Psnr, CapAndClosedForms) {
  Tensor g(1, 4, 4, 0.5);
  g[0] = 1.0;
  EXPECT_EQ(psnr(g, g), 100.0);
  Tensor f = g;
  for (double& v : f.values()) v += 0.1;
  EXPECT_NEAR(psnr(f, g), 20.0, 1e-9);
  Tensor h = g;
  for (double& v : h.values()) v += 0.05;
  EXPECT_NEAR(psnr(h, g) - psnr(f, g), 20 * std::log10(2.0), 1e-9);
}

TEST(QAvg, IdentityShiftAndFlatBlocks) {
  const Tensor g = test::random_tensor(2, 64, 64, 4, 0.1, 1.0);
  EXPECT_NEAR(q_avg(g, g), 1.0, 1e-12);
  Tensor s = g;
  for (double& v : s.values()) v += 0.3;
  EXPECT_LT(q_avg(s, g), 1.0);
  const Tensor flat(1, 32, 32, 0.4);
  EXPECT_EQ(q_avg(flat, flat), 1.0);
  EXPECT_EQ(q_avg(flat, test::random_tensor(1, 32, 32, 5)), 0.0);
  EXPECT_THROW(q_avg(flat, flat, 64), ShapeError);
}

TEST(QAvg, MatchesScalarOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor g = test::random_tensor(1, 32, 32, 10 + seed, 0.1, 1.0);
    const Tensor f = test::random_tensor(1, 32, 32, 20 + seed, 0.1, 1.0);
    EXPECT_NEAR(q_avg(f, g), oracle_q_avg(f, g, 32), 1e-12);
  }
}

TEST(Metrics, MatchOraclesOnSmallCubes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor g = test::random_tensor(4, 8, 8, 100 + seed, 0.05, 1.0);
    const Tensor f = test::random_tensor(4, 8, 8, 200 + seed, 0.05, 1.0);
    EXPECT_NEAR(sam(f, g), oracle_sam(f, g), 1e-9);
    EXPECT_NEAR(ergas(f, g), oracle_ergas(f, g, 6), 1e-9);
    EXPECT_NEAR(psnr(f, g), oracle_psnr(f, g), 1e-9);
    EXPECT_NEAR(q_avg(f, g, 8), oracle_q_avg(f, g, 8), 1e-9);
  }
}

TEST(Metrics, InvariantToCommonScaling) {
  const Tensor g = test::random_tensor(3, 32, 32, 7, 0.1, 1.0);
  const Tensor f = test::random_tensor(3, 32, 32, 8, 0.1, 1.0);
  Tensor g2 = g, f2 = f;
  for (double& v : g2.values()) v *= 7.5;
  for (double& v : f2.values()) v *= 7.5;
  EXPECT_NEAR(sam(f, g), sam(f2, g2), 1e-9);
  EXPECT_NEAR(q_avg(f, g), q_avg(f2, g2), 1e-9);
}

TEST(QStar, Arithmetic) {
  EXPECT_EQ(q_star(0, 0), 1.0);
  EXPECT_EQ(q_star(1, 0.3), 0.0);
  EXPECT_NEAR(q_star(0.0214, 0.0444), 0.9352, 5e-5);
}

TEST(DLambda, ConsistentInputs) {
  const Tensor hs(2, 8, 8, 0.3);
  EXPECT_NEAR(d_lambda(interpolate_band(hs, 6), hs, kSpec, kDec), 0.0, 1e-12);
  // A smooth HR cube and its own degradation.
  Tensor gt(2, 96, 96);
  for (std::size_t c = 0; c < 2; ++c) gt.set_channel(c, test::smooth_band(96, 96, c, 12.0));
  const Tensor low = degrade(gt, kSpec, kDec);
  const double consistent = d_lambda(gt, low, kSpec, kDec);
  EXPECT_LT(consistent, 0.02);
  Tensor swapped(2, 96, 96);
  swapped.set_channel(0, gt.channel(1));
  swapped.set_channel(1, gt.channel(0));
  EXPECT_GE(d_lambda(swapped, low, kSpec, kDec), 5 * consistent);
}

TEST(DS, AffineConsistentFusionIsNearZero) {
  const Tensor pan = test::random_tensor(1, 96, 96, 1, 0.0, 1.0);
  const Tensor pan_s = mtf_lowpass(pan, kSpec);
  Tensor fused(2, 96, 96);
  for (std::size_t i = 0; i < pan_s.size(); ++i) {
    fused(0, i / 96, i % 96) = 0.5 * pan_s[i] + 0.1;
    fused(1, i / 96, i % 96) = 2.0 * pan_s[i] + 0.3;
  }
  const Tensor hs = degrade(fused, kSpec, kDec);
  EXPECT_LT(d_s(fused, pan_s, hs, kSpec, kDec), 0.01);
  Tensor pan2 = pan_s;
  for (double& v : pan2.values()) v = 2 * v + 5;
  EXPECT_NEAR(d_s(fused, pan_s, hs, kSpec, kDec), d_s(fused, pan2, hs, kSpec, kDec), 1e-9);
  EXPECT_THROW(d_s(fused, Tensor(1, 96, 96, 1.0), hs, kSpec, kDec), ValueError);
}

TEST(DS, InterpolationOnTexturedPanIsWorseThanPanDetail) {
  // Scene with detail shared by PAN and band; EXP cannot reproduce it.
  Tensor pan(1, 96, 96);
  for (std::size_t y = 0; y < 96; ++y)
    for (std::size_t x = 0; x < 96; ++x) pan(0, y, x) = ((x / 3 + y / 3) % 2) * 0.5 + 0.1 * std::sin(0.05 * x);
  Tensor gt(1, 96, 96);
  for (std::size_t i = 0; i < pan.size(); ++i) gt[i] = 0.8 * pan[i] + 0.1;
  const Tensor hs = degrade(gt, kSpec, kDec);
  const double ds_exp = d_s(interpolate_band(hs, 6), pan, hs, kSpec, kDec);
  const double ds_gt = d_s(gt, pan, hs, kSpec, kDec);
  EXPECT_GT(ds_exp, ds_gt);
}

TEST(ExpBaseline, ConstantAndRoundTrip) {
  const DataCube c = make_cube(Tensor(2, 6, 6, 0.7), {500, 600});
  const DataCube e = exp_baseline(c);
  for (double v : e.values.values()) EXPECT_NEAR(v, 0.7, 1e-12);
  Tensor smooth(3, 16, 16);
  for (std::size_t b = 0; b < 3; ++b) smooth.set_channel(b, test::smooth_band(16, 16, 30 + b));
  const DataCube hs = make_cube(smooth, {500, 600, 700});
  EXPECT_LT(test::mean_relative_l1(degrade(exp_baseline(hs).values, kSpec, kDec), hs.values), 0.02);
}

TEST(BandCorrelation, DuplicatesNoiseAndFlat) {
  Tensor c(4, 64, 64);
  const Tensor a = test::random_tensor(1, 64, 64, 1);
  c.set_channel(0, a);
  c.set_channel(1, a);
  c.set_channel(2, test::random_tensor(1, 64, 64, 2));
  for (double& v : c.plane(3)) v = 0.5;
  const auto m = band_correlation_matrix(c);
  EXPECT_NEAR(m[0][1], 1.0, 1e-12);
  EXPECT_LT(std::abs(m[0][2]), 0.1);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m[i][i], 1.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m[i][j], m[j][i], 1e-12);
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m[3][j], 0.0);
  EXPECT_THROW(band_correlation_matrix(Tensor(1, 4, 4)), ShapeError);
}

TEST(Report, KeyValueSchema) {
  MetricsReport r;
  r.sam_deg = 1.5;
  r.psnr_db = 30;
  std::ostringstream out;
  write_report(out, r);
  EXPECT_EQ(out.str(), "mode=reduced\nsam_deg=1.5\nergas=0\npsnr_db=30\nq_avg=0\n");
  r.mode = MetricsReport::Mode::full;
  r.d_lambda = 0.0214;
  r.d_s = 0.0444;
  r.q_star = q_star(r.d_lambda, r.d_s);
  std::ostringstream full;
  write_report(full, r);
  EXPECT_NE(full.str().find("d_lambda=0.0214\nd_s=0.0444\nq_star="), std::string::npos);
}

}  // namespace
}  // namespace rpnn
