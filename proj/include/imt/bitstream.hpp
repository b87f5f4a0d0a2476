#pragma once

// Bitstream container, version 1, little-endian.
//
//  off size field
//   0   4   magic "IMTC"
//   4   1   version (1)
//   5   1   flags (must be 0)
//   6   2   width
//   8   2   height
//  10   4   frame_count
//  14   2   fps numerator
//  16   2   fps denominator
//  18   2   qscale, unsigned 8.8 fixed point
//  20   1   intra kind (0 builtin, 1 external)
//  21   1   intra qp
//  22   8   model hash
//  30   4   key payload length
//  34   4   residual payload length
//  38   4   CRC-32 of bytes 0..37
//  42   2   zero
//  44       key payload, residual payload

#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "imt/error.hpp"
#include "imt/intra_codec.hpp"

namespace imt {

inline constexpr std::array<std::uint8_t, 4> kStreamMagic = {'I', 'M', 'T', 'C'};
inline constexpr std::uint8_t kStreamVersion = 1;
inline constexpr std::size_t kHeaderSize = 44;
inline constexpr std::size_t kChecksumOffset = 38;

struct StreamMeta {
  std::uint16_t width = 0, height = 0;
  std::uint32_t frame_count = 1;
  std::uint16_t fps_num = 25, fps_den = 1;
  double qscale = 64.0;
  IntraKind intra_kind = IntraKind::kBuiltin;
  std::uint8_t intra_qp = 22;
  std::uint64_t model_hash = 0;

  double fps() const { return double(fps_num) / fps_den; }
  friend bool operator==(const StreamMeta&, const StreamMeta&) = default;
};

struct Bitstream {
  StreamMeta meta;
  std::vector<std::uint8_t> key_payload;
  std::vector<std::uint8_t> residual_payload;

  std::size_t total_bytes() const { return kHeaderSize + key_payload.size() + residual_payload.size(); }
  friend bool operator==(const Bitstream&, const Bitstream&) = default;
};

/// qscale in 8.8 fixed point; anything not exactly representable is rejected.
inline std::uint16_t encode_qscale(double q) {
  const double scaled = q * 256.0;
  if (!(q > 0) || scaled > 65535.0 || scaled != std::floor(scaled))
    throw ConfigError("qscale " + std::to_string(q) + " is not representable in 8.8 fixed point");
  return static_cast<std::uint16_t>(scaled);
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(in[off + i]) << (8 * i);
  return v;
}

inline std::uint32_t header_crc(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(kChecksumOffset)));
}

inline void validate_meta(const StreamMeta& m, bool reading) {
  std::string bad;
  if (m.width == 0 || m.width % 16 != 0) bad = "width " + std::to_string(m.width);
  else if (m.height == 0 || m.height % 16 != 0) bad = "height " + std::to_string(m.height);
  else if (m.frame_count < 1) bad = "frame_count 0";
  else if (m.fps_num == 0 || m.fps_den == 0) bad = "fps " + std::to_string(m.fps_num) + "/" + std::to_string(m.fps_den);
  else if (!(m.qscale > 0)) bad = "qscale";
  else if (m.intra_kind != IntraKind::kBuiltin && m.intra_kind != IntraKind::kExternal) bad = "intra kind";
  else if (m.intra_kind == IntraKind::kBuiltin && (m.intra_qp < 1 || m.intra_qp > 63))
    bad = "intra qp " + std::to_string(m.intra_qp);
  if (bad.empty()) return;
  if (reading) throw BitstreamError(BitstreamErrc::kInvalidField, bad);
  throw ConfigError("invalid stream metadata: " + bad);
}

}  // namespace detail

inline std::vector<std::uint8_t> write_bitstream(std::span<const std::uint8_t> key_payload,
                                                 std::span<const std::uint8_t> residual_payload,
                                                 const StreamMeta& meta) {
  detail::validate_meta(meta, false);
  std::vector<std::uint8_t> out(kStreamMagic.begin(), kStreamMagic.end());
  out.reserve(kHeaderSize + key_payload.size() + residual_payload.size());
  detail::put_le(out, kStreamVersion, 1);
  detail::put_le(out, 0, 1);
  detail::put_le(out, meta.width, 2);
  detail::put_le(out, meta.height, 2);
  detail::put_le(out, meta.frame_count, 4);
  detail::put_le(out, meta.fps_num, 2);
  detail::put_le(out, meta.fps_den, 2);
  detail::put_le(out, encode_qscale(meta.qscale), 2);
  detail::put_le(out, static_cast<std::uint8_t>(meta.intra_kind), 1);
  detail::put_le(out, meta.intra_qp, 1);
  detail::put_le(out, meta.model_hash, 8);
  detail::put_le(out, key_payload.size(), 4);
  detail::put_le(out, residual_payload.size(), 4);
  detail::put_le(out, detail::header_crc(out), 4);
  detail::put_le(out, 0, 2);
  out.insert(out.end(), key_payload.begin(), key_payload.end());
  out.insert(out.end(), residual_payload.begin(), residual_payload.end());
  return out;
}

inline std::vector<std::uint8_t> write_bitstream(const Bitstream& bs) {
  return write_bitstream(bs.key_payload, bs.residual_payload, bs.meta);
}

/// Parse and validate. With `expected_model_hash`, a different hash is an error.
inline Bitstream read_bitstream(std::span<const std::uint8_t> bytes,
                                std::optional<std::uint64_t> expected_model_hash = std::nullopt) {
  using detail::get_le;
  if (bytes.size() < kHeaderSize)
    throw BitstreamError(BitstreamErrc::kTooShort, std::to_string(bytes.size()) + " bytes, header needs 44");
  if (!std::equal(kStreamMagic.begin(), kStreamMagic.end(), bytes.begin()))
    throw BitstreamError(BitstreamErrc::kBadMagic, "expected IMTC");
  if (bytes[4] != kStreamVersion)
    throw BitstreamError(BitstreamErrc::kUnsupportedVersion, "version " + std::to_string(bytes[4]));
  if (bytes[5] != 0) throw BitstreamError(BitstreamErrc::kUnknownFlags, "flags " + std::to_string(bytes[5]));
  if (bytes[42] != 0 || bytes[43] != 0) throw BitstreamError(BitstreamErrc::kReservedNonzero, "offset 42");
  if (get_le(bytes, kChecksumOffset, 4) != detail::header_crc(bytes))
    throw BitstreamError(BitstreamErrc::kHeaderChecksum, "CRC-32 over bytes 0..37");

  Bitstream bs;
  StreamMeta& m = bs.meta;
  m.width = static_cast<std::uint16_t>(get_le(bytes, 6, 2));
  m.height = static_cast<std::uint16_t>(get_le(bytes, 8, 2));
  m.frame_count = static_cast<std::uint32_t>(get_le(bytes, 10, 4));
  m.fps_num = static_cast<std::uint16_t>(get_le(bytes, 14, 2));
  m.fps_den = static_cast<std::uint16_t>(get_le(bytes, 16, 2));
  m.qscale = static_cast<double>(get_le(bytes, 18, 2)) / 256.0;
  m.intra_kind = static_cast<IntraKind>(bytes[20]);
  m.intra_qp = bytes[21];
  m.model_hash = get_le(bytes, 22, 8);
  detail::validate_meta(m, true);

  const std::uint64_t key_len = get_le(bytes, 30, 4), res_len = get_le(bytes, 34, 4);
  if (kHeaderSize + key_len + res_len != bytes.size())
    throw BitstreamError(BitstreamErrc::kLengthMismatch, "header declares " + std::to_string(key_len) + " + " +
                                                             std::to_string(res_len) + " payload bytes, stream has " +
                                                             std::to_string(bytes.size() - kHeaderSize));
  if (expected_model_hash && *expected_model_hash != m.model_hash)
    throw BitstreamError(BitstreamErrc::kModelHashMismatch, "stream was encoded with a different checkpoint");
  bs.key_payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + key_len);
  bs.residual_payload.assign(bytes.begin() + kHeaderSize + key_len, bytes.end());
  return bs;
}

}  // namespace imt
