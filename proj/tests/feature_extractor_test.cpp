#include <gtest/gtest.h>

#include "imt/feature_extractor.hpp"
#include "imt/grad_check.hpp"
#include "test_util.hpp"

using namespace imt;
using imt::testing::random_tensor_as;

TEST(Extractor, SixBySixForEverySupportedSize) {
  for (std::size_t size : supported_input_sizes()) {
    auto p = reference_architecture<float>(size, 1);
    auto frame = random_tensor_as<float>({3, size, size}, 2, 0, 1);
    auto f = extract_compact_feature(frame, p);
    EXPECT_EQ(f.grid.size(), 36u);
    for (float v : f.grid) EXPECT_TRUE(std::isfinite(v));
    auto batch = extract_batch(as_batch(frame), p);
    EXPECT_EQ(batch.shape(), (Shape{1, 1, 6, 6})) << size;
  }
}

TEST(Extractor, ZeroNetworkGivesZeroCode) {
  auto p = reference_architecture<float>(96, 3);
  fill_conv_parameters(p, 0.0, 0.0);
  auto f = extract_compact_feature(random_tensor_as<float>({3, 96, 96}, 4, 0, 1), p);
  for (float v : f.grid) EXPECT_EQ(v, 0.0f);
}

TEST(Extractor, Deterministic) {
  auto a = reference_architecture<float>(64, 5);
  auto b = reference_architecture<float>(64, 5);
  std::size_t mismatches = 0;
  copy_parameters(a, b);  // must be a no-op on identical params
  a.visit("", [&](const std::string& name, auto& v) {
    b.visit("", [&](const std::string& n2, auto& w) {
      if (n2 == name && !(v.value() == w.value())) ++mismatches;
    });
  });
  EXPECT_EQ(mismatches, 0u);
  auto c = reference_architecture<float>(64, 5);
  auto frame = random_tensor_as<float>({3, 64, 64}, 6, 0, 1);
  EXPECT_EQ(extract_compact_feature(frame, a), extract_compact_feature(frame, a));
  EXPECT_EQ(extract_compact_feature(frame, a), extract_compact_feature(frame, c));
}

TEST(Extractor, ToyParameterBudget) {
  auto p = reference_architecture<float>(64, 7);
  const auto n = count_parameters(p);
  EXPECT_LT(n, 2'000'000u);
  EXPECT_GT(n, 100'000u);
}

TEST(Extractor, RejectsUnsupportedSizes) {
  EXPECT_THROW(reference_architecture<float>(128, 1), ConfigError);
  auto p = reference_architecture<float>(64, 1);
  try {
    extract_compact_feature(Tensor<float>({3, 96, 96}), p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("384x384"), std::string::npos);
  }
}

TEST(Extractor, TranslationChangesCode) {
  auto p = reference_architecture<float>(64, 8);
  auto frame = random_tensor_as<float>({3, 64, 64}, 9, 0, 1);
  Tensor<float> shifted(frame.shape());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) shifted[(c * 64 + y) * 64 + x] = frame[(c * 64 + y) * 64 + (x + 63) % 64];
  EXPECT_NE(extract_compact_feature(frame, p), extract_compact_feature(shifted, p));
}

// Gradients through the whole extractor, driven by a 4x-downscaled input
// that is bilinearly up-sampled to the 64x64 frame.
TEST(Extractor, EndToEndGradCheck) {
  auto p32 = reference_architecture<float>(64, 10);
  auto p64 = reference_architecture<double>(64, 10);
  copy_parameters(p32, p64);
  // Give GDN non-trivial parameters so its gradient path is exercised.
  p64.head_gdn.gamma_raw.mutable_value().fill(0.7);
  p32.head_gdn.gamma_raw.mutable_value().fill(0.7f);
  auto proj = imt::testing::random_tensor({1, 1, 6, 6}, 11);
  auto fn = [&](const auto& v) {
    using T = std::decay_t<decltype(v[0].value()[0])>;
    const auto& p = [&]() -> const ExtractorParams<T>& {
      if constexpr (std::is_same_v<T, double>) return p64; else return p32;
    }();
    auto frame = resample(v[0], Ratio{4, 1}, ResampleMode::kBilinear);
    return weighted_sum(extract_batch(frame, p), proj.cast<T>());
  };
  auto input = imt::testing::random_tensor({1, 3, 16, 16}, 12, 0, 1);
  auto r = grad_check(fn, {input}, 1e-5, 1e-4, Precision::kHigh);
  EXPECT_TRUE(r.passed) << r.message;
}
