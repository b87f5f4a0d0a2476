#include <gtest/gtest.h>

#include <cmath>

#include "imt/grad_check.hpp"
#include "imt/nn_ops.hpp"
#include "test_util.hpp"

using namespace imt;
using imt::testing::random_tensor;

namespace {

// Straight six-loop convolution used as the reference.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                          int pad) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> y({std::size_t(B), std::size_t(Cout), std::size_t(Ho), std::size_t(Wo)});
  for (int n = 0; n < B; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double s = b[co];
          for (int ci = 0; ci < Cin; ++ci)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = oy * stride + i - pad, ix = ox * stride + j - pad;
                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                s += x.at(n, ci, iy, ix) * w.at(co, ci, i, j);
              }
          y.at(n, co, oy, ox) = s;
        }
  return y;
}

Var<double> cst(const Tensor<double>& t) { return Var<double>::constant(t); }

}  // namespace

TEST(Conv2d, IdentityKernel) {
  auto x = random_tensor({1, 1, 3, 3}, 1);
  auto y = conv2d(cst(x), cst(Tensor<double>::ones({1, 1, 1, 1})), cst(Tensor<double>::zeros({1})), 1, 0);
  EXPECT_EQ(y.value(), x);
}

TEST(Conv2d, CountingOverlap) {
  auto y = conv2d(cst(Tensor<double>::ones({1, 1, 3, 3})), cst(Tensor<double>::ones({1, 1, 3, 3})),
                  cst(Tensor<double>::zeros({1})), 1, 1);
  EXPECT_DOUBLE_EQ(y.value().at(0, 0, 1, 1), 9.0);
  EXPECT_DOUBLE_EQ(y.value().at(0, 0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(y.value().at(0, 0, 2, 2), 4.0);
}

TEST(Conv2d, MatchesNaiveLoops) {
  auto w = random_tensor({4, 3, 3, 3}, 3);
  auto b = random_tensor({4}, 4);
  for (int stride : {1, 2}) {
    // Stride 2 needs an odd extent for exact division.
    auto x = random_tensor({2, 3, stride == 1 ? 8u : 9u, stride == 1 ? 8u : 9u}, 2);
    auto got = conv2d(cst(x), cst(w), cst(b), stride, 1).value();
    auto want = naive_conv(x, w, b, stride, 1);
    EXPECT_LE(max_abs_diff(got, want), 1e-12);
    auto got32 = conv2d(Var<float>::constant(x.cast<float>()), Var<float>::constant(w.cast<float>()),
                        Var<float>::constant(b.cast<float>()), stride, 1)
                     .value()
                     .cast<double>();
    EXPECT_LE(max_abs_diff(got32, want), 1e-5);
  }
}

TEST(Conv2d, Linear) {
  auto x = random_tensor({1, 2, 6, 6}, 5), z = random_tensor({1, 2, 6, 6}, 6);
  auto w = random_tensor({3, 2, 3, 3}, 7);
  auto zero_b = Tensor<double>::zeros({3});
  const double a = 0.7, c = -1.3;
  Tensor<double> mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * z[i];
  auto lhs = conv2d(cst(mix), cst(w), cst(zero_b), 1, 1).value();
  auto cx = conv2d(cst(x), cst(w), cst(zero_b), 1, 1).value();
  auto cz = conv2d(cst(z), cst(w), cst(zero_b), 1, 1).value();
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], a * cx[i] + c * cz[i], 1e-5);
}

TEST(Conv2d, ShapeErrorsNameTheAxis) {
  auto x = cst(Tensor<double>::zeros({1, 2, 5, 6}));
  auto b = cst(Tensor<double>::zeros({1}));
  try {
    conv2d(x, cst(Tensor<double>::zeros({1, 3, 3, 3})), b, 1, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
  }
  try {
    conv2d(x, cst(Tensor<double>::zeros({1, 2, 3, 3})), b, 2, 1);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
  EXPECT_THROW(conv2d(x, cst(Tensor<double>::zeros({1, 2, 2, 2})), b, 1, 1), DimensionError);
}

TEST(Gdn, IdentityConfiguration) {
  auto x = random_tensor({2, 3, 4, 4}, 8);
  auto y = gdn(cst(x), cst(Tensor<double>::ones({3})), cst(Tensor<double>::zeros({3, 3})), false);
  EXPECT_EQ(y.value(), x);
}

TEST(Gdn, SingleChannelFormula) {
  auto y = gdn(cst(Tensor<double>({1, 1, 1, 1}, 2.0)), cst(Tensor<double>::ones({1})),
               cst(Tensor<double>::ones({1, 1})), false);
  EXPECT_NEAR(y.value()[0], 2.0 / std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(y.value()[0], 0.8944, 1e-4);
}

TEST(Gdn, InverseRecoversInputWithoutCrossTerms) {
  auto x = random_tensor({1, 3, 4, 4}, 9, -3, 3);
  auto beta = random_tensor({3}, 10, 0.5, 2.0);
  auto gamma = Tensor<double>::zeros({3, 3});
  auto y = gdn(gdn(cst(x), cst(beta), cst(gamma), false), cst(beta), cst(gamma), true);
  EXPECT_LE(max_abs_diff(y.value(), x), 1e-4);
}

TEST(Gdn, BetaFloorKeepsOutputFinite) {
  auto y = gdn(cst(Tensor<double>({1, 1, 2, 2}, 0.0)), cst(Tensor<double>::zeros({1})),
               cst(Tensor<double>::zeros({1, 1})), false);
  EXPECT_TRUE(y.value().all_finite());
}

TEST(Softmax, Basics) {
  auto one = softmax(cst(Tensor<double>({3, 1}, 5.0)), 1);
  for (double v : one.value().vec()) EXPECT_DOUBLE_EQ(v, 1.0);

  auto eq = softmax(cst(Tensor<double>({2, 5}, 0.3)), 1);
  for (double v : eq.value().vec()) EXPECT_NEAR(v, 0.2, 1e-15);

  auto big = softmax(cst(Tensor<double>({2}, std::vector<double>{1000, 1001})), 0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(big.value()[0], 1 / (1 + e), 1e-15);
  EXPECT_NEAR(big.value()[1], e / (1 + e), 1e-15);
  auto big32 = softmax(Var<float>::constant(Tensor<float>({2}, std::vector<float>{1000, 1001})), 0);
  EXPECT_TRUE(big32.value().all_finite());
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  auto x = random_tensor({3, 7, 4}, 11, -5, 5);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto y = softmax(cst(x), axis).value();
    Tensor<double> shifted = x;
    for (auto& v : shifted.vec()) v += 12.5;
    auto ys = softmax(cst(shifted), axis).value();
    EXPECT_LE(max_abs_diff(y, ys), 1e-6);
  }
  auto y = softmax(cst(x), 1).value();
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t k = 0; k < 7; ++k) s += y[(o * 7 + k) * 4 + i];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Resample, IdentityAndConstant) {
  auto x = random_tensor({1, 2, 4, 6}, 12);
  EXPECT_EQ(resample(cst(x), {1, 1}, ResampleMode::kBilinear).value(), x);
  EXPECT_EQ(resample(cst(x), {1, 1}, ResampleMode::kNearest).value(), x);
  auto c = resample(cst(Tensor<double>({1, 1, 2, 2}, 0.37)), {2, 1}, ResampleMode::kBilinear).value();
  ASSERT_EQ(c.shape(), (Shape{1, 1, 4, 4}));
  for (double v : c.vec()) EXPECT_NEAR(v, 0.37, 1e-15);
}

TEST(Resample, HalfPixelBilinearOracle) {
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  auto y = resample(cst(x), {2, 1}, ResampleMode::kBilinear).value();
  // Per-pixel oracle: source coordinate (i + 0.5) / 2 - 0.5, clamped to [0, 1].
  auto coord = [](int i) { return std::clamp((i + 0.5) / 2.0 - 0.5, 0.0, 1.0); };
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double sy = coord(i), sx = coord(j);
      const double top = x[0] * (1 - sx) + x[1] * sx;
      const double bot = x[2] * (1 - sx) + x[3] * sx;
      EXPECT_NEAR(y.at(0, 0, i, j), top * (1 - sy) + bot * sy, 1e-15) << i << "," << j;
    }
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 0.75);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 3, 3), 3.0);
}

TEST(Resample, RationalAndNearest) {
  auto y = resample(cst(random_tensor({1, 1, 6, 6}, 13)), {4, 3}, ResampleMode::kBilinear);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 8, 8}));
  Tensor<double> x({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3});
  auto n = resample(cst(x), {2, 1}, ResampleMode::kNearest).value();
  EXPECT_EQ(n.at(0, 0, 1, 1), 0.0);
  EXPECT_EQ(n.at(0, 0, 2, 3), 3.0);
  EXPECT_THROW(resample(cst(random_tensor({1, 1, 5, 5}, 1)), {1, 2}, ResampleMode::kBilinear), ConfigError);
}

TEST(LayerNorm, NormalizesEachToken) {
  auto x = random_tensor({2, 8, 3, 3}, 14, -2, 4);
  auto y = layer_norm_channels(cst(x), cst(Tensor<double>::ones({8})), cst(Tensor<double>::zeros({8}))).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t p = 0; p < 9; ++p) {
      double m = 0, v = 0;
      for (std::size_t c = 0; c < 8; ++c) m += y[(b * 8 + c) * 9 + p];
      m /= 8;
      for (std::size_t c = 0; c < 8; ++c) v += std::pow(y[(b * 8 + c) * 9 + p] - m, 2);
      EXPECT_NEAR(m, 0.0, 1e-5);
      EXPECT_NEAR(v / 8, 1.0, 1e-5);
    }
}

TEST(GradCheck, SumOfSquares) {
  auto r = grad_check([](const auto& xs) { return mean(mul(xs[0], xs[0])); }, {random_tensor({3, 4}, 15)}, 1e-6,
                      1e-9);
  EXPECT_TRUE(r.passed) << r.message;
  EXPECT_LT(r.max_rel_error[0], 1e-9);
}

TEST(GradCheck, NonFiniteGradientIsReportedNotThrown) {
  auto r = grad_check(
      [](const auto& xs) {
        using V = std::decay_t<decltype(xs[0])>;
        using T = std::decay_t<decltype(xs[0].value()[0])>;
        (void)sizeof(V);
        return mean(unary(xs[0], [](T v) { return std::sqrt(std::abs(v)); },
                          [](T v, T) { return T(0.5) / std::sqrt(std::abs(v)) * (v < 0 ? -1 : 1) / T(0); }));
      },
      {random_tensor({2}, 16)}, 1e-6, 1e-5);
  EXPECT_FALSE(r.passed);
}

// Every differentiable op against central differences, five seeds, both precisions.
class OpGradients : public ::testing::TestWithParam<unsigned> {};

template <class Fn>
void check_both(Fn fn, std::vector<Tensor<double>> inputs) {
  auto hi = grad_check(fn, inputs, 1e-6, 1e-5, Precision::kHigh);
  EXPECT_TRUE(hi.passed) << "high: " << hi.message;
  auto lo = grad_check(fn, inputs, 1e-6, 1e-3, Precision::kDefault);
  EXPECT_TRUE(lo.passed) << "default: " << lo.message;
}

TEST_P(OpGradients, Conv2d) {
  const unsigned s = GetParam();
  auto proj = random_tensor({2, 4, 3, 3}, s + 100);
  check_both(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v[0].value()[0])>;
        return weighted_sum(conv2d(v[0], v[1], v[2], 2, 1), proj.cast<T>());
      },
             {random_tensor({2, 3, 5, 5}, s), random_tensor({4, 3, 3, 3}, s + 1), random_tensor({4}, s + 2)});
}

TEST_P(OpGradients, Gdn) {
  const unsigned s = GetParam();
  auto proj = random_tensor({2, 3, 2, 2}, s + 100);
  for (bool inverse : {false, true})
    check_both(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v[0].value()[0])>;
          return weighted_sum(gdn(v[0], v[1], v[2], inverse), proj.cast<T>());
        },
        {random_tensor({2, 3, 2, 2}, s), random_tensor({3}, s + 1, 0.5, 1.5), random_tensor({3, 3}, s + 2, -0.8, 0.8)});
}

TEST_P(OpGradients, Softmax) {
  const unsigned s = GetParam();
  auto proj = random_tensor({2, 5, 3}, s + 100);
  check_both(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v[0].value()[0])>;
        return weighted_sum(softmax(v[0], 1), proj.cast<T>());
      },
      {random_tensor({2, 5, 3}, s, -3, 3)});
}

TEST_P(OpGradients, ResampleBothModes) {
  const unsigned s = GetParam();
  for (Ratio f : {Ratio{2, 1}, Ratio{1, 2}, Ratio{4, 3}}) {
    const auto out = resample(cst(random_tensor({1, 2, 6, 6}, s)), f, ResampleMode::kBilinear).shape();
    auto proj = random_tensor(out, s + 100);
    check_both(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v[0].value()[0])>;
          return weighted_sum(resample(v[0], f, ResampleMode::kBilinear), proj.cast<T>());
        },
        {random_tensor({1, 2, 6, 6}, s)});
  }
}

TEST_P(OpGradients, LayerNormBmmConcatActivations) {
  const unsigned s = GetParam();
  auto proj = random_tensor({1, 6, 2, 2}, s + 100);
  check_both(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v[0].value()[0])>;
        auto h = layer_norm_channels(concat_channels(v[0], gelu(v[1])), v[2], v[3]);
        return weighted_sum(sigmoid(leaky_relu(h)), proj.cast<T>());
      },
      {random_tensor({1, 2, 2, 2}, s), random_tensor({1, 4, 2, 2}, s + 1), random_tensor({6}, s + 2),
       random_tensor({6}, s + 3)});
  auto proj2 = random_tensor({2, 3, 5}, s + 200);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      Shape as = ta ? Shape{2, 4, 3} : Shape{2, 3, 4};
      Shape bs = tb ? Shape{2, 5, 4} : Shape{2, 4, 5};
      check_both(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v[0].value()[0])>;
            return weighted_sum(bmm(v[0], v[1], ta, tb), proj2.cast<T>());
          },
          {random_tensor(as, s + 4), random_tensor(bs, s + 5)});
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Values(1u, 2u, 3u, 4u, 5u));
