#include <gtest/gtest.h>

#include <cmath>

#include "rpnn/tensor.hpp"
#include "test_support.hpp"

namespace rpnn {
namespace {

TEST(Conv2dForward, ZeroInputGivesBias) {
  ConvLayer l(1, 1, 3);
  test::fill_random(l.kernel, 3);
  l.bias[0] = 0.75;
  const Tensor out = conv2d_forward(Tensor(1, 3, 3), l);
  for (double v : out.values()) EXPECT_EQ(v, 0.75);
}

TEST(Conv2dForward, IdentityKernel) {
  ConvLayer l(1, 1, 1);
  l.kernel[0] = 1.0;
  const Tensor x = test::random_tensor(1, 5, 7, 11);
  EXPECT_EQ(conv2d_forward(x, l), x);
}

TEST(Conv2dForward, AveragingKernelReplicateCorners) {
  Tensor x(1, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) x[i] = static_cast<double>(i + 1);
  ConvLayer l(1, 1, 3);
  std::fill(l.kernel.begin(), l.kernel.end(), 1.0 / 9.0);
  const Tensor out = conv2d_forward(x, l);
  const Tensor ref = test::brute_conv(x, l);
  EXPECT_NEAR(out(0, 1, 1), 5.0, 1e-12);
  // Frozen from the nested-loop oracle: replicate-padded corner windows.
  EXPECT_NEAR(out(0, 0, 0), 21.0 / 9.0, 1e-12);
  EXPECT_NEAR(out(0, 0, 2), 33.0 / 9.0, 1e-12);
  EXPECT_NEAR(out(0, 2, 0), 57.0 / 9.0, 1e-12);
  EXPECT_NEAR(out(0, 2, 2), 69.0 / 9.0, 1e-12);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
}

TEST(Conv2dForward, MatchesBruteForceOnRandomShapes) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t in = 1 + rng() % 4, out = 1 + rng() % 4, k = 1 + 2 * (rng() % 4);
    const std::size_t h = 1 + rng() % 16, w = 1 + rng() % 16;
    ConvLayer l(in, out, k);
    test::fill_random(l.kernel, rng());
    test::fill_random(l.bias, rng());
    const Tensor x = test::random_tensor(in, h, w, rng());
    const Tensor got = conv2d_forward(x, l);
    const Tensor ref = test::brute_conv(x, l);
    ASSERT_TRUE(got.same_shape(x) || got.channels() == out);
    EXPECT_EQ(got.height(), h);
    EXPECT_EQ(got.width(), w);
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], ref[i], 1e-12);
  }
}

TEST(Conv2dForward, RejectsChannelMismatch) {
  ConvLayer l(3, 2, 3);
  try {
    conv2d_forward(Tensor(2, 4, 4), l);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 3 input channels, got 2"), std::string::npos);
  }
}

TEST(Conv2dForward, LinearWithoutBias) {
  ConvLayer l(2, 3, 5);
  test::fill_random(l.kernel, 8);
  const Tensor x = test::random_tensor(2, 9, 11, 1), y = test::random_tensor(2, 9, 11, 2);
  const double a = 0.7, b = -1.3;
  Tensor mix(2, 9, 11);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Tensor lhs = conv2d_forward(mix, l);
  const Tensor cx = conv2d_forward(x, l), cy = conv2d_forward(y, l);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + b * cy[i], 1e-12);
}

TEST(Conv2dForward, Deterministic) {
  ConvLayer l(4, 6, 5);
  test::fill_random(l.kernel, 9);
  const Tensor x = test::random_tensor(4, 33, 17, 4);
  EXPECT_EQ(conv2d_forward(x, l), conv2d_forward(x, l));
}

TEST(Conv2dBackward, ZeroGradOut) {
  ConvLayer l(2, 3, 3);
  test::fill_random(l.kernel, 1);
  const auto g = conv2d_backward(test::random_tensor(2, 4, 4, 2), l, Tensor(3, 4, 4));
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.kernel) EXPECT_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, IdentityKernelPassesGradient) {
  ConvLayer l(1, 1, 1);
  l.kernel[0] = 1.0;
  const Tensor g = test::random_tensor(1, 6, 5, 3);
  EXPECT_EQ(conv2d_backward(test::random_tensor(1, 6, 5, 4), l, g).input, g);
}

TEST(Conv2dBackward, RejectsGradShapeMismatch) {
  ConvLayer l(2, 3, 3);
  EXPECT_THROW(conv2d_backward(Tensor(2, 4, 4), l, Tensor(2, 4, 4)), ShapeError);
}

// Loss = <R, conv(X)> for a fixed random R, so d loss / d conv = R.
TEST(Conv2dBackward, MatchesFiniteDifferencesEverywhere) {
  ConvLayer l(2, 3, 3);
  test::fill_random(l.kernel, 21);
  test::fill_random(l.bias, 22);
  Tensor x = test::random_tensor(2, 4, 4, 23);
  const Tensor r = test::random_tensor(3, 4, 4, 24);
  auto loss = [&] {
    const Tensor y = conv2d_forward(x, l);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  const auto g = conv2d_backward(x, l, r);
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_LT(test::relative_error(g.input[i], test::central_difference(loss, x[i])), 1e-5) << "input " << i;
  for (std::size_t i = 0; i < l.kernel.size(); ++i)
    EXPECT_LT(test::relative_error(g.kernel[i], test::central_difference(loss, l.kernel[i])), 1e-5) << "kernel " << i;
  for (std::size_t i = 0; i < l.bias.size(); ++i)
    EXPECT_LT(test::relative_error(g.bias[i], test::central_difference(loss, l.bias[i])), 1e-5) << "bias " << i;
}

TEST(Conv2dBackward, InputGradMatchesBruteAdjointAcrossTiles) {
  // Tall enough that a wide layer is processed in several im2col tiles.
  ConvLayer l(48, 2, 5);
  test::fill_random(l.kernel, 31);
  const Tensor x = test::random_tensor(48, 40, 300, 32);
  const Tensor r = test::random_tensor(2, 40, 300, 33);
  const auto g = conv2d_backward(x, l, r);
  // <conv(x), r> = <x, grad_input> + <bias, sum r> ; bias is zero.
  const Tensor y = conv2d_forward(x, l);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * r[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * g.input[i];
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(lhs));
}

TEST(Relu, Examples) {
  Tensor x(1, 1, 3);
  x[0] = -1;
  x[1] = 0;
  x[2] = 2;
  const Tensor y = relu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);
  const Tensor p = test::random_tensor(1, 4, 4, 1, 0.1, 1.0);
  EXPECT_EQ(relu(p), p);
  const Tensor ones(1, 4, 4, 1.0);
  EXPECT_EQ(relu_backward(p, ones), ones);
}

TEST(Relu, MaskMatchesFiniteDifferences) {
  Tensor x = test::random_tensor(2, 5, 5, 7);
  const Tensor r = test::random_tensor(2, 5, 5, 8);
  auto loss = [&] {
    const Tensor y = relu(x);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  const Tensor g = relu_backward(x, r);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) < 1e-3) continue;
    EXPECT_NEAR(g[i], test::central_difference(loss, x[i]), 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p = {1.0, -2.0}, g = {0.0, 0.0};
  const std::size_t sizes[] = {2};
  AdamState st(sizes, 0.1);
  const std::span<double> ps[] = {p};
  const std::span<const double> gs[] = {g};
  ASSERT_TRUE(adam_update(ps, gs, st));
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
  EXPECT_EQ(st.step, 1u);
}

// Hand-rolled scalar Adam used as the oracle.
struct ScalarAdam {
  double m = 0, v = 0, lr;
  int t = 0;
  double step(double w, double g) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    return w - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

TEST(Adam, OneStepMatchesScalarOracle) {
  std::vector<double> p = {0.5, 0.5, 0.5}, g = {0.3, -2.0, 1e-3};
  const std::size_t sizes[] = {3};
  AdamState st(sizes, 0.01);
  const std::span<double> ps[] = {p};
  const std::span<const double> gs[] = {g};
  ASSERT_TRUE(adam_update(ps, gs, st));
  for (int i = 0; i < 3; ++i) {
    ScalarAdam o{0, 0, 0.01};
    EXPECT_NEAR(p[i], o.step(0.5, g[i]), 1e-15);
    // First step from zero state moves by lr * g / (|g| + eps).
    EXPECT_NEAR(p[i] - 0.5, -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  }
}

TEST(Adam, QuadraticDescent) {
  std::vector<double> w = {0.0}, g = {0.0};
  const std::size_t sizes[] = {1};
  AdamState st(sizes, 0.1);
  const std::span<double> ps[] = {w};
  const std::span<const double> gs[] = {g};
  for (int i = 0; i < 100; ++i) {
    g[0] = 2.0 * (w[0] - 3.0);
    adam_update(ps, gs, st);
  }
  EXPECT_NEAR(w[0], 3.0, 0.05);
  EXPECT_EQ(st.step, 100u);
}

TEST(Adam, RejectsNonFiniteGradient) {
  std::vector<double> p = {1.0}, g = {std::nan("")};
  const std::size_t sizes[] = {1};
  AdamState st(sizes, 0.1);
  const std::span<double> ps[] = {p};
  const std::span<const double> gs[] = {g};
  EXPECT_FALSE(adam_update(ps, gs, st));
  EXPECT_EQ(st.step, 0u);
  EXPECT_EQ(st.rejected_steps, 1u);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(st.first_moment[0][0], 0.0);
}

TEST(Adam, RejectsShapeMismatch) {
  std::vector<double> p = {1.0, 2.0}, g = {1.0};
  const std::size_t sizes[] = {2};
  AdamState st(sizes, 0.1);
  const std::span<double> ps[] = {p};
  const std::span<const double> gs[] = {g};
  EXPECT_THROW(adam_update(ps, gs, st), ShapeError);
}

}  // namespace
}  // namespace rpnn
