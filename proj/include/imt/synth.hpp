#pragma once

// Procedural talking-body stand-in: one textured body on a static gradient
// background, moving by one of three motion families. Texture coordinates
// are body-local, so the pattern travels with the body.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "imt/error.hpp"
#include "imt/tensor.hpp"

namespace imt {

enum class MotionFamily { kTranslatingBlob = 0, kStickFigure = 1, kScalingEllipse = 2 };

inline const char* to_string(MotionFamily f) {
  switch (f) {
    case MotionFamily::kTranslatingBlob: return "blob";
    case MotionFamily::kStickFigure: return "stick";
    case MotionFamily::kScalingEllipse: return "ellipse";
  }
  return "?";
}

struct SynthClipConfig {
  std::size_t resolution = 64;
  std::size_t frames_per_clip = 16;
  bool background = true;  // false: black background (useful for centroid checks)
};

/// Everything that determines a clip. Distances are in pixels, time in frames.
struct MotionParams {
  MotionFamily family = MotionFamily::kTranslatingBlob;
  double cx = 32, cy = 32;        // body centre / stick pivot
  double vx = 0, vy = 0;          // blob velocity
  double radius = 10;             // blob radius, ellipse semi-major, stick segment length
  double aspect = 0.6;            // ellipse minor/major
  double angle = 0, omega = 0;    // orientation and angular velocity (rad/frame)
  double joint = 0.8, joint_omega = 0;  // stick second-segment relative angle
  double thickness = 4;           // stick half-thickness
  double scale_amp = 0, scale_freq = 0;  // ellipse scale = 1 + amp*sin(freq*t)
  std::array<double, 3> color{0.9, 0.6, 0.4};
  std::array<double, 3> bg_top{0.1, 0.1, 0.2}, bg_bottom{0.3, 0.3, 0.2};
  std::uint64_t texture_seed = 0;
};

namespace detail {

/// Periodic value noise on an 8x8 lattice, bilinear, in [0,1].
class ValueNoise {
 public:
  explicit ValueNoise(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : lattice_) v = u(rng);
  }
  double operator()(double x, double y) const {
    const double fx = std::floor(x), fy = std::floor(y);
    const int x0 = wrap(fx), y0 = wrap(fy), x1 = wrap(fx + 1), y1 = wrap(fy + 1);
    const double tx = x - fx, ty = y - fy;
    const double a = lattice_[y0 * 8 + x0] * (1 - tx) + lattice_[y0 * 8 + x1] * tx;
    const double b = lattice_[y1 * 8 + x0] * (1 - tx) + lattice_[y1 * 8 + x1] * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  static int wrap(double v) { return static_cast<int>(((static_cast<long>(v) % 8) + 8) % 8); }
  std::array<double, 64> lattice_{};
};

inline double reflect(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return lo;
  double t = std::fmod(p - lo, 2 * span);
  if (t < 0) t += 2 * span;
  return lo + (t <= span ? t : 2 * span - t);
}

/// Distance from point to segment (a, b), and the projection parameter.
inline double segment_distance(double px, double py, double ax, double ay, double bx, double by, double& along) {
  const double dx = bx - ax, dy = by - ay, len2 = dx * dx + dy * dy;
  along = len2 > 0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
  const double qx = ax + along * dx - px, qy = ay + along * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

}  // namespace detail

/// Render frame `t` of the clip described by `p`: [3,R,R] in [0,1].
inline Tensor<float> render_frame(const SynthClipConfig& cfg, const MotionParams& p, std::size_t t) {
  const std::size_t R = cfg.resolution;
  if (R == 0) throw ConfigError("synthetic resolution must be positive");
  const detail::ValueNoise noise(p.texture_seed);
  const double time = static_cast<double>(t);
  const double margin = p.radius;
  Tensor<float> out({3, R, R});
  const std::size_t plane = R * R;

  // Body pose at time t.
  const double cx = detail::reflect(p.cx + p.vx * time, margin, R - margin);
  const double cy = detail::reflect(p.cy + p.vy * time, margin, R - margin);
  const double ang = p.angle + p.omega * time;
  const double scale = 1 + p.scale_amp * std::sin(p.scale_freq * time);
  const double tex_freq = 8.0 / std::max(p.radius, 1.0);  // lattice cells per pixel

  for (std::size_t y = 0; y < R; ++y)
    for (std::size_t x = 0; x < R; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double sd = 1e9, u = 0, v = 0;  // signed distance (px) and body-local texture coords
      switch (p.family) {
        case MotionFamily::kTranslatingBlob: {
          const double dx = px - cx, dy = py - cy;
          sd = std::sqrt(dx * dx + dy * dy) - p.radius;
          u = dx, v = dy;
          break;
        }
        case MotionFamily::kScalingEllipse: {
          const double c = std::cos(ang), s = std::sin(ang);
          const double lx = (c * (px - cx) + s * (py - cy)) / scale;
          const double ly = (-s * (px - cx) + c * (py - cy)) / scale;
          const double a = p.radius, b = p.radius * p.aspect;
          const double k = std::sqrt((lx * lx) / (a * a) + (ly * ly) / (b * b));
          sd = (k - 1) * b * scale;  // approximate, exact on the minor axis
          u = lx, v = ly;
          break;
        }
        case MotionFamily::kStickFigure: {
          const double ex = cx + p.radius * std::cos(ang), ey = cy + p.radius * std::sin(ang);
          const double a2 = ang + p.joint + p.joint_omega * time;
          const double fx = ex + p.radius * std::cos(a2), fy = ey + p.radius * std::sin(a2);
          double t1, t2;
          const double d1 = detail::segment_distance(px, py, cx, cy, ex, ey, t1);
          const double d2 = detail::segment_distance(px, py, ex, ey, fx, fy, t2);
          if (d1 <= d2) {
            sd = d1 - p.thickness;
            u = t1 * p.radius, v = (px - cx) * -std::sin(ang) + (py - cy) * std::cos(ang);
          } else {
            sd = d2 - p.thickness;
            u = p.radius + t2 * p.radius, v = (px - ex) * -std::sin(a2) + (py - ey) * std::cos(a2);
          }
          break;
        }
      }
      const double cover = std::clamp(0.5 - sd, 0.0, 1.0);
      const double shade = 0.55 + 0.45 * noise(u * tex_freq + 16, v * tex_freq + 16);
      const double fy_bg = (y + 0.5) / R;
      for (std::size_t c = 0; c < 3; ++c) {
        const double bg = cfg.background ? p.bg_top[c] * (1 - fy_bg) + p.bg_bottom[c] * fy_bg : 0.0;
        const double body = p.color[c] * shade;
        out[c * plane + y * R + x] = static_cast<float>(std::clamp(bg * (1 - cover) + body * cover, 0.0, 1.0));
      }
    }
  return out;
}

/// Random motion parameters for a clip; a pure function of (config, seed).
inline MotionParams sample_motion(const SynthClipConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double R = static_cast<double>(cfg.resolution), k = R / 64.0;
  MotionParams p;
  p.family = static_cast<MotionFamily>(rng() % 3);
  p.cx = range(0.35, 0.65) * R;
  p.cy = range(0.35, 0.65) * R;
  p.radius = range(9, 15) * k;
  p.aspect = range(0.45, 0.8);
  p.angle = range(0, 6.283185307179586);
  p.thickness = range(3, 5) * k;
  p.joint = range(0.4, 1.6);
  switch (p.family) {
    case MotionFamily::kTranslatingBlob:
      p.vx = range(-1.5, 1.5) * k;
      p.vy = range(-1.5, 1.5) * k;
      break;
    case MotionFamily::kStickFigure:
      p.radius = range(12, 18) * k;
      p.omega = range(-0.12, 0.12);
      p.joint_omega = range(-0.2, 0.2);
      break;
    case MotionFamily::kScalingEllipse:
      p.omega = range(-0.05, 0.05);
      p.scale_amp = range(0.1, 0.3);
      p.scale_freq = range(0.2, 0.5);
      break;
  }
  for (auto& c : p.color) c = range(0.35, 1.0);
  for (auto& c : p.bg_top) c = range(0.0, 0.35);
  for (auto& c : p.bg_bottom) c = range(0.0, 0.35);
  p.texture_seed = rng();
  return p;
}

inline std::vector<Tensor<float>> render_clip(const SynthClipConfig& cfg, const MotionParams& p) {
  std::vector<Tensor<float>> frames;
  frames.reserve(cfg.frames_per_clip);
  for (std::size_t t = 0; t < cfg.frames_per_clip; ++t) frames.push_back(render_frame(cfg, p, t));
  return frames;
}

/// `count` clips; clip i uses seed derived from (seed, i).
inline std::vector<std::vector<Tensor<float>>> synth_dataset(const SynthClipConfig& cfg, std::size_t count,
                                                             std::uint64_t seed) {
  if (count < 1) throw ConfigError("synth_dataset needs count >= 1");
  std::vector<std::vector<Tensor<float>>> clips;
  std::vector<std::uint64_t> seeds(count);
  std::mt19937_64 master(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& s : seeds) s = master();
  for (std::size_t i = 0; i < count; ++i) clips.push_back(render_clip(cfg, sample_motion(cfg, seeds[i])));
  return clips;
}

}  // namespace imt
