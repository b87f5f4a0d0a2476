#pragma once

// Compact feature extraction: a frame is down-sampled, passed through a small
// U-Net, squeezed to 6x6x1 by strided convolutions and normalized with GDN.

#include <array>
#include <cstdint>
#include <vector>

#include "imt/layers.hpp"
#include "imt/model_config.hpp"

namespace imt {

/// The 6x6 code transmitted for one frame (channel axis elided).
struct CompactFeature {
  std::array<float, kCompactSize> grid{};
  std::uint32_t frame_index = 0;

  float& at(std::size_t r, std::size_t c) { return grid[r * kCompactSide + c]; }
  float at(std::size_t r, std::size_t c) const { return grid[r * kCompactSide + c]; }
  friend bool operator==(const CompactFeature&, const CompactFeature&) = default;
};

/// One kernel/stride/padding triple of the head.
struct HeadStage {
  std::size_t kernel, stride, padding;
};

/// Strided convolutions that take the U-Net side down to exactly 6.
inline std::vector<HeadStage> head_plan(std::size_t side) {
  switch (side) {
    case 16: return {{3, 3, 1}};
    case 24: return {{3, 3, 0}, {3, 1, 0}};
    case 96: return {{3, 3, 0}, {7, 5, 0}};
    default:
      throw ConfigError("no extractor head for U-Net side " + std::to_string(side) + "; supported frames: " +
                        supported_sizes_text());
  }
}

template <class T>
struct ExtractorParams {
  ModelConfig config;
  ConvLayer<T> stem;                 // 3 -> w
  std::vector<ConvLayer<T>> down;    // 3 encoder stages
  std::vector<ConvLayer<T>> up;      // 3 decoder stages, deepest first
  std::vector<ConvLayer<T>> head_conv;
  GdnLayer<T> head_gdn;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    stem.visit(prefix + "extractor.stem", f);
    for (std::size_t i = 0; i < down.size(); ++i) down[i].visit(prefix + "extractor.down" + std::to_string(i), f);
    for (std::size_t i = 0; i < up.size(); ++i) up[i].visit(prefix + "extractor.up" + std::to_string(i), f);
    for (std::size_t i = 0; i < head_conv.size(); ++i)
      head_conv[i].visit(prefix + "extractor.head" + std::to_string(i), f);
    head_gdn.visit(prefix + "extractor.head_gdn", f);
  }
};

/// Randomly initialized reference U-Net for a supported frame size.
template <class T>
ExtractorParams<T> make_extractor(const ModelConfig& cfg, Rng& rng) {
  const std::size_t side = cfg.extractor_side();
  const auto plan = head_plan(side);
  const std::size_t w = cfg.unet_width;
  const std::size_t widths[4] = {w, 2 * w, 4 * w, 8 * w};

  ExtractorParams<T> p;
  p.config = cfg;
  p.stem = make_conv3<T>(3, widths[0], rng);
  for (int i = 1; i <= 3; ++i) p.down.push_back(make_conv3<T>(widths[i - 1], widths[i], rng));
  for (int i = 3; i >= 1; --i) p.up.push_back(make_conv3<T>(widths[i] + widths[i - 1], widths[i - 1], rng));
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::size_t cout = i + 1 == plan.size() ? 1 : w;
    p.head_conv.push_back(make_conv<T>(w, cout, plan[i].kernel, plan[i].stride, plan[i].padding, rng));
  }
  p.head_gdn = make_gdn<T>(1);
  return p;
}

template <class T>
ExtractorParams<T> reference_architecture(std::size_t input_size, std::uint64_t seed) {
  Rng rng(seed);
  return make_extractor<T>(reference_config(input_size), rng);
}

/// Batched extraction: frames [B,3,H,W] -> codes [B,1,6,6].
template <class T>
Var<T> extract_batch(const Var<T>& frames, const ExtractorParams<T>& p) {
  if (frames.shape().size() != 4 || frames.dim(1) != 3)
    throw DimensionError("extractor expects [B,3,H,W], got " + shape_str(frames.shape()));
  require_frame_size(p.config, frames.dim(2), frames.dim(3), "extract_compact_feature");

  Var<T> x = resample(frames, p.config.downsample, ResampleMode::kBilinear);
  std::vector<Var<T>> skips;
  x = lrelu(p.stem(x));
  for (const auto& conv : p.down) {
    skips.push_back(x);
    x = lrelu(conv(pool2(x)));
  }
  for (std::size_t i = 0; i < p.up.size(); ++i) {
    x = lrelu(p.up[i](concat_channels(up2(x), skips[skips.size() - 1 - i])));
  }
  for (std::size_t i = 0; i < p.head_conv.size(); ++i) {
    x = p.head_conv[i](x);
    if (i + 1 < p.head_conv.size()) x = lrelu(x);
  }
  return p.head_gdn(x);
}

/// Pack a single [3,H,W] frame as a batch of one.
template <class T>
Var<T> as_batch(const Tensor<T>& frame) {
  if (frame.rank() != 3) throw DimensionError("expected a [3,H,W] frame, got " + shape_str(frame.shape()));
  return Var<T>::constant(frame.reshaped({1, frame.dim(0), frame.dim(1), frame.dim(2)}));
}

/// theta_comp for one frame with values in [0,1].
template <class T>
CompactFeature extract_compact_feature(const Tensor<T>& frame, const ExtractorParams<T>& p,
                                       std::uint32_t frame_index = 0) {
  Var<T> code = extract_batch(as_batch(frame), p);
  CompactFeature f;
  f.frame_index = frame_index;
  for (std::size_t i = 0; i < kCompactSize; ++i) f.grid[i] = static_cast<float>(code.value()[i]);
  return f;
}

/// Compact feature as a [1,1,6,6] tensor.
template <class T>
Tensor<T> feature_tensor(const CompactFeature& f) {
  Tensor<T> t({1, 1, kCompactSide, kCompactSide});
  for (std::size_t i = 0; i < kCompactSize; ++i) t[i] = static_cast<T>(f.grid[i]);
  return t;
}

}  // namespace imt
