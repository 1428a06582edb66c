#include <gtest/gtest.h>

#include <sstream>

#include "rpnn/config.hpp"

namespace rpnn {
namespace {

TEST(KeyValues, ParsesCommentsAndWhitespace) {
  const auto kv = parse_key_values("# header\n tuning.alpha = 2.5 # inline\n\nloss.pan_band=380, 720\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("tuning.alpha"), "2.5");
  EXPECT_EQ(kv.at("loss.pan_band"), "380, 720");
}

TEST(KeyValues, RejectsMalformedLines) {
  EXPECT_THROW(parse_key_values("tuning.alpha 2.5\n"), ConfigError);
  EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_key_values(" = 2\n"), ConfigError);
}

TEST(RunConfig, AppliesEveryKind) {
  RunConfig cfg;
  apply_config(parse_key_values("tuning.alpha = 2\n"
                                "tuning.learning_rate = 1e-4\n"
                                "tuning.direction = backward\n"
                                "loss.rho_max = const\n"
                                "loss.sigma = 8\n"
                                "loss.pan_band = 380,720\n"
                                "mtf.nyquist_gain = 0.25\n"
                                "scene.wavelengths = 500, 600,700\n"
                                "scene.seed = 42\n"
                                "pretrain.epochs = 3\n"
                                "manifest.subcommand = sharpen\n"),
               cfg);
  EXPECT_EQ(cfg.tuning.alpha, 2.0);
  EXPECT_EQ(cfg.tuning.learning_rate, 1e-4);
  EXPECT_EQ(cfg.tuning.direction, Direction::backward);
  EXPECT_EQ(cfg.tuning.loss.rho_max_mode, RhoMaxMode::constant);
  EXPECT_EQ(cfg.tuning.loss.window, 8u);
  EXPECT_EQ(cfg.tuning.loss.pan_band_lo, 380.0);
  EXPECT_EQ(cfg.tuning.loss.pan_band_hi, 720.0);
  EXPECT_EQ(cfg.tuning.mtf.nyquist_gain, 0.25);
  EXPECT_EQ(cfg.scene.wavelengths, (std::vector<double>{500, 600, 700}));
  EXPECT_EQ(cfg.scene.seed, 42u);
  EXPECT_EQ(cfg.pretrain.epochs, 3u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  EXPECT_THROW(apply_config({{"tuning.alfa", "1"}}, cfg), ConfigError);
  EXPECT_THROW(apply_config({{"tuning.alpha", "fast"}}, cfg), ConfigError);
  EXPECT_THROW(apply_config({{"loss.pan_band", "400"}}, cfg), ConfigError);
  EXPECT_THROW(apply_config({{"tuning.direction", "sideways"}}, cfg), ConfigError);
  EXPECT_THROW(apply_config({{"pretrain.epochs", "-1"}}, cfg), ConfigError);
}

TEST(RunConfig, RoundTripsThroughText) {
  RunConfig a;
  a.tuning.alpha = 0.1 + 0.2;  // not exactly representable in short decimal
  a.tuning.learning_rate = 3e-5;
  a.scene.wavelengths = {401.5, 410.25};
  a.seed = 7;
  std::ostringstream out;
  write_key_values(out, to_key_values(a));
  RunConfig b;
  apply_config(parse_key_values(out.str()), b);
  EXPECT_EQ(to_key_values(a), to_key_values(b));
  EXPECT_EQ(b.tuning.alpha, a.tuning.alpha);
}

TEST(Text, ShortestRoundTripFormatting) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-5), "1e-05");
  EXPECT_EQ(parse_double(format_double(0.1 + 0.2), "x"), 0.1 + 0.2);
  EXPECT_EQ(format_double(100.0), "100");
  EXPECT_THROW(parse_double("1.5x", "x"), ConfigError);
}

}  // namespace
}  // namespace rpnn
