#pragma once

// Key-frame intra coding.
//
// builtin: BT.601 full-range YCbCr 4:2:0, 8x8 orthonormal DCT-II, uniform
// quantizer with step 2^((qp-4)/6), zigzag scan, range coded with adaptive
// models (DC luma, AC luma, chroma) plus a per-block coded flag.
// external: a user command converts a raw planar 4:2:0 file to a blob and back.

#include <unistd.h>

#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "imt/error.hpp"
#include "imt/range_coder.hpp"
#include "imt/tensor.hpp"

namespace imt {

enum class IntraKind : std::uint8_t { kBuiltin = 0, kExternal = 1 };

inline const char* to_string(IntraKind k) { return k == IntraKind::kBuiltin ? "builtin" : "external"; }

inline IntraKind parse_intra_kind(const std::string& s) {
  if (s == "builtin") return IntraKind::kBuiltin;
  if (s == "external") return IntraKind::kExternal;
  throw ConfigError("intra kind must be builtin or external, got '" + s + "'");
}

struct IntraCodecConfig {
  IntraKind kind = IntraKind::kBuiltin;
  int qp = 22;
  std::string external_command;         // {input} raw 4:2:0 -> {output} blob
  std::string external_decode_command;  // {input} blob -> {output} raw 4:2:0

  void validate() const {
    if (kind == IntraKind::kBuiltin && (qp < 1 || qp > 63))
      throw ConfigError("builtin intra qp must be in [1, 63], got " + std::to_string(qp));
    if (kind == IntraKind::kExternal && (qp < 0 || qp > 255))
      throw ConfigError("external intra qp must fit in one byte, got " + std::to_string(qp));
  }
};

inline double intra_qstep(int qp) { return std::exp2((qp - 4) / 6.0); }

// ---------------------------------------------------------------------------
// Colour conversion

struct Yuv420 {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> y, cb, cr;  // cb/cr are (width/2) x (height/2)

  std::size_t byte_size() const { return width * height * 3 / 2; }
  friend bool operator==(const Yuv420&, const Yuv420&) = default;
};

namespace detail {

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

inline void require_intra_dims(std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || w % 16 != 0 || h % 16 != 0)
    throw DimensionError("intra codec needs frame dimensions divisible by 16, got " + std::to_string(w) + "x" +
                         std::to_string(h));
}

}  // namespace detail

/// [3,H,W] in [0,1] -> 8-bit BT.601 full-range 4:2:0 (2x2 chroma average).
inline Yuv420 rgb_to_yuv420(const Tensor<float>& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3)
    throw DimensionError("intra codec expects a [3,H,W] frame, got " + shape_str(frame.shape()));
  const std::size_t H = frame.dim(1), W = frame.dim(2), plane = H * W;
  detail::require_intra_dims(W, H);
  Yuv420 out;
  out.width = W;
  out.height = H;
  out.y.resize(plane);
  std::vector<double> cb(plane), cr(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = std::round(std::clamp<double>(frame[i], 0, 1) * 255);
    const double g = std::round(std::clamp<double>(frame[plane + i], 0, 1) * 255);
    const double b = std::round(std::clamp<double>(frame[2 * plane + i], 0, 1) * 255);
    out.y[i] = detail::to_u8(0.299 * r + 0.587 * g + 0.114 * b);
    cb[i] = 128 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    cr[i] = 128 + 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  const std::size_t cw = W / 2, ch = H / 2;
  out.cb.resize(cw * ch);
  out.cr.resize(cw * ch);
  for (std::size_t y = 0; y < ch; ++y)
    for (std::size_t x = 0; x < cw; ++x) {
      const std::size_t i0 = 2 * y * W + 2 * x, i1 = i0 + W;
      out.cb[y * cw + x] = detail::to_u8((cb[i0] + cb[i0 + 1] + cb[i1] + cb[i1 + 1]) / 4);
      out.cr[y * cw + x] = detail::to_u8((cr[i0] + cr[i0 + 1] + cr[i1] + cr[i1 + 1]) / 4);
    }
  return out;
}

namespace detail {

/// x2 bilinear, half-pixel centres, edge clamped.
inline std::vector<double> upsample_chroma(const std::vector<std::uint8_t>& p, std::size_t cw, std::size_t ch) {
  const std::size_t W = 2 * cw, H = 2 * ch;
  std::vector<double> out(W * H);
  auto tap = [](std::size_t i, std::size_t n, std::size_t& a, std::size_t& b, double& t) {
    const double s = std::clamp((i + 0.5) / 2.0 - 0.5, 0.0, double(n - 1));
    a = static_cast<std::size_t>(s);
    b = std::min(a + 1, n - 1);
    t = s - a;
  };
  for (std::size_t y = 0; y < H; ++y) {
    std::size_t y0, y1;
    double ty;
    tap(y, ch, y0, y1, ty);
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t x0, x1;
      double tx;
      tap(x, cw, x0, x1, tx);
      const double top = p[y0 * cw + x0] * (1 - tx) + p[y0 * cw + x1] * tx;
      const double bot = p[y1 * cw + x0] * (1 - tx) + p[y1 * cw + x1] * tx;
      out[y * W + x] = top * (1 - ty) + bot * ty;
    }
  }
  return out;
}

}  // namespace detail

/// 4:2:0 -> [3,H,W] with values k/255.
inline Tensor<float> yuv420_to_rgb(const Yuv420& yuv) {
  const std::size_t W = yuv.width, H = yuv.height, plane = W * H;
  if (yuv.y.size() != plane || yuv.cb.size() != plane / 4 || yuv.cr.size() != plane / 4)
    throw DataError("inconsistent 4:2:0 plane sizes for " + std::to_string(W) + "x" + std::to_string(H));
  const auto cb = detail::upsample_chroma(yuv.cb, W / 2, H / 2);
  const auto cr = detail::upsample_chroma(yuv.cr, W / 2, H / 2);
  Tensor<float> out({3, H, W});
  for (std::size_t i = 0; i < plane; ++i) {
    const double Y = yuv.y[i], u = cb[i] - 128, v = cr[i] - 128;
    out[i] = detail::to_u8(Y + 1.402 * v) / 255.0f;
    out[plane + i] = detail::to_u8(Y - 0.344136 * u - 0.714136 * v) / 255.0f;
    out[2 * plane + i] = detail::to_u8(Y + 1.772 * u) / 255.0f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builtin block codec

namespace detail {

inline const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> c{};
    const double pi = std::acos(-1.0);
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n)
        c[k * 8 + n] = (k == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8)) * std::cos((2 * n + 1) * k * pi / 16);
    return c;
  }();
  return m;
}

inline const std::array<int, 64>& zigzag() {
  static const std::array<int, 64> z = [] {
    std::array<int, 64> order{};
    int i = 0;
    for (int s = 0; s < 15; ++s) {
      if (s % 2 == 0) {
        for (int r = std::min(s, 7); r >= std::max(0, s - 7); --r) order[i++] = r * 8 + (s - r);
      } else {
        for (int r = std::max(0, s - 7); r <= std::min(s, 7); ++r) order[i++] = r * 8 + (s - r);
      }
    }
    return order;
  }();
  return z;
}

/// out = C * in * C^T (forward) or C^T * in * C (inverse).
inline std::array<double, 64> dct8x8(const std::array<double, 64>& in, bool inverse) {
  const auto& c = dct_matrix();
  std::array<double, 64> tmp{}, out{};
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += (inverse ? c[k * 8 + i] : c[i * 8 + k]) * in[k * 8 + j];
      tmp[i * 8 + j] = s;
    }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += tmp[i * 8 + k] * (inverse ? c[k * 8 + j] : c[j * 8 + k]);
      out[i * 8 + j] = s;
    }
  return out;
}

inline constexpr std::size_t kEob = 0;
inline constexpr std::size_t kNegEscape = 1;
inline constexpr std::size_t kPosEscape = 509;
inline constexpr int kDirectMax = 253;
inline constexpr unsigned kEscapeBits = 16;

struct IntraModels {
  AdaptiveModel dc_luma{511}, ac_luma{511}, chroma{511};
  AdaptiveModel coded_luma{2}, coded_chroma{2};
};

inline void put_value(RangeEncoder& enc, AdaptiveModel& m, int v) {
  if (std::abs(v) <= kDirectMax) {
    enc.encode_symbol(static_cast<std::size_t>(v + 255), m);
    return;
  }
  const auto mag = static_cast<std::uint32_t>(std::abs(v));
  if (mag >= (1u << kEscapeBits)) throw CodecError("intra coefficient magnitude " + std::to_string(mag) + " too large");
  enc.encode_symbol(v < 0 ? kNegEscape : kPosEscape, m);
  enc.encode_bits(mag, kEscapeBits);
}

inline int get_value(RangeDecoder& dec, std::size_t sym) {
  if (sym == kNegEscape) return -static_cast<int>(dec.decode_bits(kEscapeBits));
  if (sym == kPosEscape) return static_cast<int>(dec.decode_bits(kEscapeBits));
  if (sym < 2 || sym > kPosEscape) throw CodecError("invalid intra symbol " + std::to_string(sym));
  return static_cast<int>(sym) - 255;
}

inline void encode_plane(RangeEncoder& enc, const std::vector<std::uint8_t>& p, std::size_t W, std::size_t H,
                         double step, AdaptiveModel& flag, AdaptiveModel& dc, AdaptiveModel& ac) {
  const auto& zz = zigzag();
  int prev_dc = 0;
  for (std::size_t by = 0; by < H; by += 8)
    for (std::size_t bx = 0; bx < W; bx += 8) {
      std::array<double, 64> blk;
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) blk[i * 8 + j] = double(p[(by + i) * W + bx + j]) - 128.0;
      const auto coef = dct8x8(blk, false);
      std::array<int, 64> q;
      for (int k = 0; k < 64; ++k) q[k] = static_cast<int>(std::round(coef[zz[k]] / step));
      const int dc_diff = q[0] - prev_dc;
      prev_dc = q[0];
      int last = 0;
      for (int k = 63; k >= 1; --k)
        if (q[k] != 0) {
          last = k;
          break;
        }
      const bool coded = dc_diff != 0 || last != 0;
      enc.encode_symbol(coded ? 1 : 0, flag);
      if (!coded) continue;
      put_value(enc, dc, dc_diff);
      for (int k = 1; k <= last; ++k) put_value(enc, ac, q[k]);
      if (last < 63) enc.encode_symbol(kEob, ac);
    }
}

inline void decode_plane(RangeDecoder& dec, std::vector<std::uint8_t>& p, std::size_t W, std::size_t H, double step,
                         AdaptiveModel& flag, AdaptiveModel& dc, AdaptiveModel& ac) {
  const auto& zz = zigzag();
  int prev_dc = 0;
  for (std::size_t by = 0; by < H; by += 8)
    for (std::size_t bx = 0; bx < W; bx += 8) {
      std::array<double, 64> coef{};
      if (dec.decode_symbol(flag) == 1) {
        prev_dc += get_value(dec, dec.decode_symbol(dc));
        for (int k = 1; k < 64; ++k) {
          const std::size_t sym = dec.decode_symbol(ac);
          if (sym == kEob) break;
          coef[zz[k]] = get_value(dec, sym) * step;
        }
      }
      coef[0] = prev_dc * step;
      const auto blk = dct8x8(coef, true);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) p[(by + i) * W + bx + j] = to_u8(blk[i * 8 + j] + 128.0);
    }
}

// ---------------------------------------------------------------------------
// External command plumbing

inline std::filesystem::path unique_temp_dir() {
  static std::atomic<unsigned> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("imt-intra-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string substitute(std::string tpl, const std::string& key, const std::string& value) {
  for (std::size_t pos = 0; (pos = tpl.find(key, pos)) != std::string::npos; pos += value.size())
    tpl.replace(pos, key.size(), value);
  return tpl;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + p.string());
}

/// Run `tpl` with placeholders filled; returns the bytes left at {output}.
inline std::vector<std::uint8_t> run_external(const std::string& tpl, std::span<const std::uint8_t> input, int qp,
                                              const char* role) {
  if (tpl.empty()) throw ConfigError(std::string("external intra ") + role + " command is empty");
  const auto dir = unique_temp_dir();
  struct Cleanup {
    std::filesystem::path d;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(d, ec);
    }
  } cleanup{dir};
  const auto in_path = dir / "input.bin", out_path = dir / "output.bin";
  write_file_bytes(in_path, input);
  std::string cmd = substitute(tpl, "{input}", in_path.string());
  cmd = substitute(cmd, "{output}", out_path.string());
  cmd = substitute(cmd, "{qp}", std::to_string(qp));

  std::string diagnostics;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw ExternalCodecError(std::string("cannot launch external intra ") + role + " command", -1, "");
  char buf[512];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) diagnostics.append(buf, n);
  const int raw = ::pclose(pipe);
  const int status = (raw != -1 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  if (status != 0)
    throw ExternalCodecError("external intra " + std::string(role) + " command exited with status " +
                                 std::to_string(status) + ": " + cmd,
                             status, diagnostics);
  if (!std::filesystem::exists(out_path))
    throw ExternalCodecError(std::string("external intra ") + role + " command produced no output file", 0,
                             diagnostics);
  return read_file_bytes(out_path);
}

inline std::vector<std::uint8_t> pack_yuv(const Yuv420& yuv) {
  std::vector<std::uint8_t> raw;
  raw.reserve(yuv.byte_size());
  raw.insert(raw.end(), yuv.y.begin(), yuv.y.end());
  raw.insert(raw.end(), yuv.cb.begin(), yuv.cb.end());
  raw.insert(raw.end(), yuv.cr.begin(), yuv.cr.end());
  return raw;
}

inline Yuv420 unpack_yuv(std::span<const std::uint8_t> raw, std::size_t W, std::size_t H) {
  Yuv420 yuv;
  yuv.width = W;
  yuv.height = H;
  if (raw.size() != yuv.byte_size())
    throw CodecError("external intra decoder produced " + std::to_string(raw.size()) + " bytes, expected " +
                     std::to_string(yuv.byte_size()));
  const std::size_t plane = W * H, c = plane / 4;
  yuv.y.assign(raw.begin(), raw.begin() + plane);
  yuv.cb.assign(raw.begin() + plane, raw.begin() + plane + c);
  yuv.cr.assign(raw.begin() + plane + c, raw.end());
  return yuv;
}

}  // namespace detail

inline std::vector<std::uint8_t> intra_encode_yuv(const Yuv420& yuv, const IntraCodecConfig& cfg) {
  cfg.validate();
  if (cfg.kind == IntraKind::kExternal) return detail::run_external(cfg.external_command, detail::pack_yuv(yuv), cfg.qp, "encode");
  const double step = intra_qstep(cfg.qp);
  detail::IntraModels m;
  RangeEncoder enc;
  const std::size_t W = yuv.width, H = yuv.height;
  detail::encode_plane(enc, yuv.y, W, H, step, m.coded_luma, m.dc_luma, m.ac_luma);
  detail::encode_plane(enc, yuv.cb, W / 2, H / 2, step, m.coded_chroma, m.chroma, m.chroma);
  detail::encode_plane(enc, yuv.cr, W / 2, H / 2, step, m.coded_chroma, m.chroma, m.chroma);
  return enc.finish();
}

inline Yuv420 intra_decode_yuv(std::span<const std::uint8_t> bytes, std::size_t width, std::size_t height,
                               const IntraCodecConfig& cfg) {
  cfg.validate();
  detail::require_intra_dims(width, height);
  if (cfg.kind == IntraKind::kExternal)
    return detail::unpack_yuv(detail::run_external(cfg.external_decode_command, bytes, cfg.qp, "decode"), width,
                              height);
  const double step = intra_qstep(cfg.qp);
  Yuv420 yuv;
  yuv.width = width;
  yuv.height = height;
  yuv.y.resize(width * height);
  yuv.cb.resize(width * height / 4);
  yuv.cr.resize(width * height / 4);
  detail::IntraModels m;
  RangeDecoder dec(bytes);
  detail::decode_plane(dec, yuv.y, width, height, step, m.coded_luma, m.dc_luma, m.ac_luma);
  detail::decode_plane(dec, yuv.cb, width / 2, height / 2, step, m.coded_chroma, m.chroma, m.chroma);
  detail::decode_plane(dec, yuv.cr, width / 2, height / 2, step, m.coded_chroma, m.chroma, m.chroma);
  return yuv;
}

/// [3,H,W] frame in [0,1] -> payload bytes.
inline std::vector<std::uint8_t> intra_encode(const Tensor<float>& frame, const IntraCodecConfig& cfg) {
  return intra_encode_yuv(rgb_to_yuv420(frame), cfg);
}

inline Tensor<float> intra_decode(std::span<const std::uint8_t> bytes, std::size_t width, std::size_t height,
                                  const IntraCodecConfig& cfg) {
  return yuv420_to_rgb(intra_decode_yuv(bytes, width, height, cfg));
}

}  // namespace imt
