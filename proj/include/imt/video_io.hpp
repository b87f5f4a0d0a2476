#pragma once

// Video on disk: a directory of numbered binary PPM (P6) images, or a raw
// planar 8-bit RGB file (R, G, B planes per frame) with a `.dims` sidecar of
// `width=`, `height=` and optional `frames=` lines.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "imt/error.hpp"
#include "imt/tensor.hpp"

namespace imt {

namespace detail {

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

inline void require_rgb_frame(const Tensor<float>& f) {
  if (f.rank() != 3 || f.dim(0) != 3) throw DimensionError("expected a [3,H,W] frame, got " + shape_str(f.shape()));
}

// Next header token of a PPM, skipping whitespace and comments.
inline std::string ppm_token(std::istream& in, const std::string& name) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok += static_cast<char>(ch);
  }
  if (tok.empty()) throw DataError(name + ": truncated PPM header");
  return tok;
}

inline std::size_t ppm_number(std::istream& in, const std::string& name) {
  const std::string t = ppm_token(in, name);
  if (t.empty() || t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(uint8_t(c)); }))
    throw DataError(name + ": bad PPM header field '" + t + "'");
  return std::stoul(t);
}

/// Integer in a file stem, e.g. frame_0012 -> 12; -1 when absent.
inline long long trailing_number(const std::string& stem) {
  std::size_t end = stem.size();
  while (end > 0 && !std::isdigit(static_cast<unsigned char>(stem[end - 1]))) --end;
  std::size_t b = end;
  while (b > 0 && std::isdigit(static_cast<unsigned char>(stem[b - 1]))) --b;
  if (b == end || end - b > 15) return -1;
  return std::stoll(stem.substr(b, end - b));
}

}  // namespace detail

inline Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string name = path.string();
  if (detail::ppm_token(in, name) != "P6") throw DataError(name + ": only binary PPM (P6) is supported");
  const std::size_t w = detail::ppm_number(in, name), h = detail::ppm_number(in, name);
  const std::size_t maxval = detail::ppm_number(in, name);
  if (w == 0 || h == 0 || w > 16384 || h > 16384) throw DataError(name + ": implausible size");
  if (maxval != 255) throw DataError(name + ": only 8-bit PPM (maxval 255) is supported");
  std::vector<std::uint8_t> px(w * h * 3);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (static_cast<std::size_t>(in.gcount()) != px.size()) throw DataError(name + ": truncated pixel data");
  Tensor<float> f({3, h, w});
  const std::size_t plane = w * h;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) f[c * plane + i] = px[3 * i + c] / 255.0f;
  return f;
}

inline void write_ppm(const std::filesystem::path& path, const Tensor<float>& f) {
  detail::require_rgb_frame(f);
  const std::size_t h = f.dim(1), w = f.dim(2), plane = w * h;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> px(plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) px[3 * i + c] = detail::to_byte(f[c * plane + i]);
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out.flush()) throw DataError("write failed: " + path.string());
}

/// Frames of a directory of `*.ppm`, ordered by the number in each file name.
inline std::vector<Tensor<float>> read_frame_directory(const std::filesystem::path& dir) {
  std::map<long long, std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".ppm") continue;
    const long long n = detail::trailing_number(e.path().stem().string());
    if (n < 0) throw DataError(e.path().string() + ": frame file name carries no number");
    if (!files.emplace(n, e.path()).second)
      throw DataError("frame number " + std::to_string(n) + " appears twice: " + files[n].string() + ", " +
                      e.path().string());
  }
  if (files.empty()) throw DataError(dir.string() + ": no .ppm frames");
  std::vector<Tensor<float>> frames;
  for (const auto& [n, p] : files) {
    frames.push_back(read_ppm(p));
    if (frames.back().shape() != frames.front().shape())
      throw DataError(p.string() + ": resolution differs from the first frame");
  }
  return frames;
}

inline void write_frame_directory(const std::filesystem::path& dir, const std::vector<Tensor<float>>& frames) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  char name[32];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
    write_ppm(dir / name, frames[i]);
  }
}

inline std::filesystem::path dims_sidecar(const std::filesystem::path& raw) {
  auto p = raw;
  p += ".dims";
  return p;
}

inline std::vector<Tensor<float>> read_raw_video(const std::filesystem::path& path) {
  const auto side = dims_sidecar(path);
  std::ifstream dims(side);
  if (!dims) throw DataError("raw video " + path.string() + " needs a sidecar " + side.string());
  std::map<std::string, std::size_t> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(dims, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto eq = line.find('=');
    std::size_t v = 0;
    std::string key = eq == std::string::npos ? "" : line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(), [](char c) { return std::isspace(uint8_t(c)); }), key.end());
    try {
      if (eq == std::string::npos) throw std::invalid_argument("");
      std::size_t used = 0;
      const std::string val = line.substr(eq + 1);
      v = std::stoul(val, &used);
      if (val.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw DataError(side.string() + ":" + std::to_string(lineno) + ": expected key=integer");
    }
    kv[key] = v;
  }
  if (!kv.count("width") || !kv.count("height")) throw DataError(side.string() + ": width and height are required");
  const std::size_t w = kv["width"], h = kv["height"];
  if (w == 0 || h == 0) throw DataError(side.string() + ": zero dimension");
  const std::size_t frame_bytes = 3 * w * h;
  const auto size = std::filesystem::file_size(path);
  if (size == 0 || size % frame_bytes != 0)
    throw DataError(path.string() + ": " + std::to_string(size) + " bytes is not a whole number of " +
                    std::to_string(w) + "x" + std::to_string(h) + " RGB frames");
  const std::size_t n = size / frame_bytes;
  if (kv.count("frames") && kv["frames"] != n)
    throw DataError(path.string() + ": sidecar says " + std::to_string(kv["frames"]) + " frames, file holds " +
                    std::to_string(n));
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint8_t> buf(frame_bytes);
  std::vector<Tensor<float>> frames;
  for (std::size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(frame_bytes));
    if (!in) throw DataError(path.string() + ": read failed");
    Tensor<float> f({3, h, w});
    for (std::size_t k = 0; k < frame_bytes; ++k) f[k] = buf[k] / 255.0f;
    frames.push_back(std::move(f));
  }
  return frames;
}

inline void write_raw_video(const std::filesystem::path& path, const std::vector<Tensor<float>>& frames) {
  if (frames.empty()) throw DataError("no frames to write");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& f : frames) {
    detail::require_rgb_frame(f);
    if (f.shape() != frames[0].shape()) throw DimensionError("frames change resolution");
    std::vector<std::uint8_t> buf(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) buf[k] = detail::to_byte(f[k]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out.flush()) throw DataError("write failed: " + path.string());
  std::ofstream dims(dims_sidecar(path), std::ios::trunc);
  dims << "width=" << frames[0].dim(2) << "\nheight=" << frames[0].dim(1) << "\nframes=" << frames.size() << "\n";
  if (!dims.flush()) throw DataError("write failed: " + dims_sidecar(path).string());
}

inline bool is_raw_video_path(const std::filesystem::path& p) { return p.extension() == ".rgb"; }

/// Directory -> numbered images; `.rgb` file -> raw planar with sidecar.
inline std::vector<Tensor<float>> read_video(const std::filesystem::path& p) {
  if (std::filesystem::is_directory(p)) return read_frame_directory(p);
  if (!std::filesystem::exists(p)) throw DataError("no such input: " + p.string());
  if (is_raw_video_path(p)) return read_raw_video(p);
  throw DataError(p.string() + ": expected a frame directory or a .rgb raw file");
}

inline void write_video(const std::filesystem::path& p, const std::vector<Tensor<float>>& frames) {
  if (is_raw_video_path(p)) write_raw_video(p, frames);
  else write_frame_directory(p, frames);
}

}  // namespace imt
