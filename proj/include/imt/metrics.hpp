#pragma once

// Pixel-domain quality metrics on 8-bit quantized RGB frames in [0,1].

#include <array>
#include <cmath>
#include <vector>

#include "imt/error.hpp"
#include "imt/tensor.hpp"

namespace imt {

inline constexpr double kPsnrCap = 99.0;

namespace detail {

inline double to_level(float v) { return std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0); }

inline void require_same_frame(const Tensor<float>& a, const Tensor<float>& b, const char* who) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(who) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.rank() != 3 || a.dim(0) != 3) throw DimensionError(std::string(who) + " expects [3,H,W] frames");
}

}  // namespace detail

/// 10 log10(255^2 / MSE) over all RGB samples; 99 dB when identical.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  detail::require_same_frame(a, b, "psnr");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = detail::to_level(a[i]) - detail::to_level(b[i]);
    se += d * d;
  }
  if (se == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / (se / a.size())));
}

/// Mean SSIM on BT.601 luma; 11x11 Gaussian window (sigma 1.5), valid positions only.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  detail::require_same_frame(a, b, "ssim");
  const std::size_t H = a.dim(1), W = a.dim(2), plane = H * W;
  constexpr int kWin = 11;
  if (H < kWin || W < kWin) throw DimensionError("ssim needs frames of at least 11x11");
  auto luma = [&](const Tensor<float>& f) {
    std::vector<double> y(plane);
    for (std::size_t i = 0; i < plane; ++i)
      y[i] = 0.299 * detail::to_level(f[i]) + 0.587 * detail::to_level(f[plane + i]) +
             0.114 * detail::to_level(f[2 * plane + i]);
    return y;
  };
  const auto x = luma(a), y = luma(b);
  std::array<double, kWin> g{};
  double gs = 0;
  for (int i = 0; i < kWin; ++i) gs += g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
  for (auto& v : g) v /= gs;
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + kWin <= H; ++r)
    for (std::size_t c = 0; c + kWin <= W; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          const double w = g[i] * g[j];
          const double u = x[(r + i) * W + c + j], v = y[(r + i) * W + c + j];
          mx += w * u;
          my += w * v;
          sxx += w * u * u;
          syy += w * v * v;
          sxy += w * u * v;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

/// Total stream bits x fps / frames / 1000.
inline double bitrate_kbps(std::size_t total_bytes, double fps, std::size_t frame_count) {
  if (frame_count < 1) throw ConfigError("bitrate needs frame_count >= 1");
  return static_cast<double>(total_bytes) * 8.0 * fps / static_cast<double>(frame_count) / 1000.0;
}

}  // namespace imt
