#pragma once

#include <string>
#include <vector>

#include "imt/error.hpp"
#include "imt/tensor.hpp"

namespace imt {

/// Side of the 6x6x1 compact feature.
inline constexpr std::size_t kCompactSide = 6;
inline constexpr std::size_t kCompactSize = kCompactSide * kCompactSide;

/// Architecture knobs shared by extractor, decoder and discriminator.
struct ModelConfig {
  std::size_t input_size = 64;        // square frames: 64, 96 or 384
  std::size_t unet_width = 32;        // first U-Net stage width
  std::size_t feature_channels = 64;  // C_d
  bool attention_scale = true;        // divide logits by sqrt(C_d)
  Ratio downsample{1, 4};             // s applied before the U-Net

  /// Spatial side S of f_app / f_motion.
  std::size_t motion_size() const { return input_size / 4; }
  /// Side of the frame after the extractor's down-sample.
  std::size_t extractor_side() const { return static_cast<std::size_t>(downsample.apply(long(input_size))); }
};

inline const std::vector<std::size_t>& supported_input_sizes() {
  static const std::vector<std::size_t> sizes{64, 96, 384};
  return sizes;
}

inline std::string supported_sizes_text() {
  std::string s;
  for (auto v : supported_input_sizes()) s += (s.empty() ? "" : ", ") + std::to_string(v) + "x" + std::to_string(v);
  return s;
}

/// Normative configuration for a supported frame size.
inline ModelConfig reference_config(std::size_t input_size) {
  bool ok = false;
  for (auto v : supported_input_sizes()) ok = ok || v == input_size;
  if (!ok)
    throw ConfigError("unsupported input size " + std::to_string(input_size) + "; supported: " +
                      supported_sizes_text());
  ModelConfig c;
  c.input_size = input_size;
  c.unet_width = input_size == 384 ? 64 : 32;
  c.feature_channels = 64;
  return c;
}

inline void require_frame_size(const ModelConfig& cfg, std::size_t h, std::size_t w, const char* who) {
  if (h != cfg.input_size || w != cfg.input_size)
    throw ConfigError(std::string(who) + ": frame " + std::to_string(w) + "x" + std::to_string(h) +
                      " does not match the configured " + std::to_string(cfg.input_size) + "x" +
                      std::to_string(cfg.input_size) + " (supported: " + supported_sizes_text() + ")");
}

}  // namespace imt
