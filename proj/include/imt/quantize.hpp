#pragma once

// Quantization and quantized-domain temporal prediction of compact features.

#include <array>
#include <cmath>
#include <cstdint>

#include "imt/error.hpp"
#include "imt/feature_extractor.hpp"

namespace imt {

inline constexpr int kQuantMax = 127;
inline constexpr int kResidualOffset = 255;
inline constexpr std::size_t kResidualAlphabet = 511;
inline constexpr double kDefaultQscale = 64.0;

struct QuantFeature {
  std::array<int, kCompactSize> grid{};
  std::uint32_t frame_index = 0;

  friend bool operator==(const QuantFeature& a, const QuantFeature& b) { return a.grid == b.grid; }
};

/// Residual alphabet indices (residual + 255), raster order over the 6x6 grid.
struct ResidualSymbols {
  std::array<std::uint16_t, kCompactSize> symbols{};
};

/// round-half-away-from-zero(x * qscale), clamped to [-127, 127].
inline QuantFeature quantize(const CompactFeature& f, double qscale) {
  if (!(qscale > 0)) throw ConfigError("qscale must be positive");
  QuantFeature q;
  q.frame_index = f.frame_index;
  for (std::size_t i = 0; i < kCompactSize; ++i) {
    const double v = std::round(static_cast<double>(f.grid[i]) * qscale);
    q.grid[i] = static_cast<int>(std::clamp(v, double(-kQuantMax), double(kQuantMax)));
  }
  return q;
}

inline CompactFeature dequantize(const QuantFeature& q, double qscale) {
  if (!(qscale > 0)) throw ConfigError("qscale must be positive");
  CompactFeature f;
  f.frame_index = q.frame_index;
  for (std::size_t i = 0; i < kCompactSize; ++i) f.grid[i] = static_cast<float>(q.grid[i] / qscale);
  return f;
}

inline ResidualSymbols predict_and_residual(const QuantFeature& current, const QuantFeature& predictor) {
  ResidualSymbols r;
  for (std::size_t i = 0; i < kCompactSize; ++i) {
    const int d = current.grid[i] - predictor.grid[i];
    if (d < -kResidualOffset || d > kResidualOffset) throw CodecError("residual out of alphabet range");
    r.symbols[i] = static_cast<std::uint16_t>(d + kResidualOffset);
  }
  return r;
}

/// predictor + residual; anything outside the quantizer range means a corrupt stream.
inline QuantFeature reconstruct(const QuantFeature& predictor, const ResidualSymbols& residual) {
  QuantFeature q;
  q.frame_index = predictor.frame_index + 1;
  for (std::size_t i = 0; i < kCompactSize; ++i) {
    if (residual.symbols[i] >= kResidualAlphabet)
      throw BitstreamError(BitstreamErrc::kCorruptResidual, "symbol index out of alphabet");
    const int v = predictor.grid[i] + int(residual.symbols[i]) - kResidualOffset;
    if (v < -kQuantMax || v > kQuantMax)
      throw BitstreamError(BitstreamErrc::kCorruptResidual,
                           "reconstructed value " + std::to_string(v) + " at position " + std::to_string(i));
    q.grid[i] = v;
  }
  return q;
}

}  // namespace imt
