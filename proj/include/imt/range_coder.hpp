#pragma once

// Adaptive multi-symbol range coder.
//
// 32-bit range, 64-bit low with carry propagation through a cached byte
// (the LZMA construction). The leading cache byte is always zero and is not
// written, so the payload for n renormalizations is exactly n + 4 bytes and
// the decoder consumes every byte it is given.

#include <cstdint>
#include <span>
#include <vector>

#include "imt/error.hpp"

namespace imt {

/// Frequency-count model: counts start at 1, the coded symbol gains 32,
/// and all counts halve (floor 1) once the total exceeds 2^16.
class AdaptiveModel {
 public:
  static constexpr std::uint32_t kIncrement = 32;
  static constexpr std::uint32_t kMaxTotal = 1u << 16;

  explicit AdaptiveModel(std::size_t alphabet = 511) : counts_(alphabet, 1), total_(std::uint32_t(alphabet)) {}

  std::size_t alphabet() const { return counts_.size(); }
  std::uint32_t total() const { return total_; }
  std::uint32_t count(std::size_t s) const { return counts_[s]; }
  const std::vector<std::uint32_t>& counts() const { return counts_; }

  std::uint32_t cumulative(std::size_t s) const {
    std::uint32_t c = 0;
    for (std::size_t i = 0; i < s; ++i) c += counts_[i];
    return c;
  }

  /// Symbol whose interval [cum, cum + count) holds `target`; sets `cum`.
  std::size_t find(std::uint32_t target, std::uint32_t& cum) const {
    std::uint32_t c = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (target < c + counts_[i]) {
        cum = c;
        return i;
      }
      c += counts_[i];
    }
    cum = c - counts_.back();
    return counts_.size() - 1;
  }

  void update(std::size_t s) {
    counts_[s] += kIncrement;
    total_ += kIncrement;
    if (total_ > kMaxTotal) {
      total_ = 0;
      for (auto& c : counts_) {
        c = std::max<std::uint32_t>(1, c >> 1);
        total_ += c;
      }
    }
  }

  friend bool operator==(const AdaptiveModel&, const AdaptiveModel&) = default;

 private:
  std::vector<std::uint32_t> counts_;
  std::uint32_t total_;
};

class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
    const std::uint32_t r = range_ / total;
    low_ += static_cast<std::uint64_t>(r) * cum;
    range_ = r * freq;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  void encode_symbol(std::size_t s, AdaptiveModel& m) {
    encode(m.cumulative(s), m.count(s), m.total());
    m.update(s);
  }

  /// Equiprobable value in [0, 2^bits), bits <= 16.
  void encode_bits(std::uint32_t value, unsigned bits) { encode(value, 1, 1u << bits); }

  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    return std::move(out_);
  }

 private:
  static constexpr std::uint32_t kTop = 1u << 24;

  void shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t temp = cache_;
      do {
        emit(static_cast<std::uint8_t>(temp + carry));
        temp = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
  }

  void emit(std::uint8_t b) {
    if (skip_first_) {
      skip_first_ = false;  // always zero: low never carries into it
      return;
    }
    out_.push_back(b);
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool skip_first_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t decode_symbol(AdaptiveModel& m) {
    ensure_started();
    const std::uint32_t r = range_ / m.total();
    std::uint32_t target = code_ / r;
    if (target >= m.total()) target = m.total() - 1;
    std::uint32_t cum = 0;
    const std::size_t s = m.find(target, cum);
    advance(r, cum, m.count(s));
    m.update(s);
    ++symbol_index_;
    return s;
  }

  std::uint32_t decode_bits(unsigned bits) {
    ensure_started();
    const std::uint32_t total = 1u << bits;
    const std::uint32_t r = range_ / total;
    std::uint32_t v = code_ / r;
    if (v >= total) v = total - 1;
    advance(r, v, 1);
    return v;
  }

  std::size_t bytes_consumed() const { return pos_; }
  std::size_t symbols_decoded() const { return symbol_index_; }

 private:
  void ensure_started() {
    if (started_) return;
    started_ = true;
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  void advance(std::uint32_t r, std::uint32_t cum, std::uint32_t freq) {
    code_ -= r * cum;
    range_ = r * freq;
    while (range_ < (1u << 24)) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
  }

  std::uint8_t next() {
    if (pos_ >= data_.size()) throw TruncatedPayloadError(symbol_index_);
    return data_[pos_++];
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  bool started_ = false;
  std::size_t symbol_index_ = 0;
};

/// Code a symbol sequence with one continuously adapting model.
inline std::vector<std::uint8_t> ac_encode(std::span<const std::uint16_t> symbols, AdaptiveModel& model) {
  RangeEncoder enc;
  for (auto s : symbols) {
    if (s >= model.alphabet()) throw CodecError("symbol " + std::to_string(s) + " outside alphabet");
    enc.encode_symbol(s, model);
  }
  return enc.finish();
}

inline std::vector<std::uint16_t> ac_decode(std::span<const std::uint8_t> bytes, std::size_t count,
                                            AdaptiveModel& model) {
  RangeDecoder dec(bytes);
  std::vector<std::uint16_t> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<std::uint16_t>(dec.decode_symbol(model)));
  return out;
}

}  // namespace imt
