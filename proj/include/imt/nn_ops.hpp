#pragma once

// Differentiable layers used by the extractor, decoder and discriminator.

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "imt/autodiff.hpp"

namespace imt {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
  if (s.size() != r)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(s));
}

}  // namespace detail

/// Output extent of a convolution along one axis, or throws naming the axis.
inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                                   const char* axis) {
  const long span = static_cast<long>(in) + 2 * static_cast<long>(pad) - static_cast<long>(k);
  if (span < 0 || span % static_cast<long>(stride) != 0)
    throw DimensionError(std::string("conv2d: axis ") + axis + " extent " + std::to_string(in) +
                         " incompatible with kernel " + std::to_string(k) + ", stride " + std::to_string(stride) +
                         ", padding " + std::to_string(pad));
  return static_cast<std::size_t>(span) / stride + 1;
}

/// 2-D cross-correlation with zero padding. input [B,Cin,H,W], weight
/// [Cout,Cin,kh,kw], bias [Cout].
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride, std::size_t padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  detail::require_rank(xs, 4, "conv2d input");
  detail::require_rank(ws, 4, "conv2d weight");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0) throw DimensionError("conv2d: kernel extents must be odd, got " + shape_str(ws));
  if (ws[1] != xs[1])
    throw DimensionError("conv2d: axis channel mismatch, input has " + std::to_string(xs[1]) + ", weight expects " +
                         std::to_string(ws[1]));
  if (bias.value().size() != ws[0])
    throw DimensionError("conv2d: axis bias length " + std::to_string(bias.value().size()) + " != Cout " +
                         std::to_string(ws[0]));

  const std::size_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const std::size_t Cout = ws[0], kh = ws[2], kw = ws[3];
  const std::size_t Ho = conv_out_extent(H, kh, stride, padding, "height");
  const std::size_t Wo = conv_out_extent(W, kw, stride, padding, "width");
  const std::size_t K = Cin * kh * kw, N = Ho * Wo, BN = B * N;

  // im2col: cols[K, B*N]
  auto cols = std::make_shared<std::vector<T>>(K * BN, T(0));
  const T* x = input.value().data();
  for (std::size_t c = 0; c < Cin; ++c)
    for (std::size_t ki = 0; ki < kh; ++ki)
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols->data() + ((c * kh + ki) * kw + kj) * BN;
        for (std::size_t b = 0; b < B; ++b) {
          const T* plane = x + (b * Cin + c) * H * W;
          T* dst = row + b * N;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
              if (ix >= 0 && ix < static_cast<long>(W)) dst[oy * Wo + ox] = plane[iy * W + ix];
            }
          }
        }
      }

  detail::RowMat<T> y = detail::CMatMap<T>(weight.value().data(), Cout, K) * detail::CMatMap<T>(cols->data(), K, BN);
  Tensor<T> out({B, Cout, Ho, Wo});
  const T* bv = bias.value().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Cout; ++co) {
      T* dst = out.data() + (b * Cout + co) * N;
      const T* src = y.data() + co * BN + b * N;
      for (std::size_t n = 0; n < N; ++n) dst[n] = src[n] + bv[co];
    }

  return make_result<T>(std::move(out), {input, weight, bias}, [=](Node<T>& n) {
    detail::RowMat<T> dy(Cout, BN);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t co = 0; co < Cout; ++co) {
        const T* src = n.grad.data() + (b * Cout + co) * N;
        std::copy(src, src + N, dy.data() + co * BN + b * N);
      }
    auto& in_node = *n.parents[0];
    auto& w_node = *n.parents[1];
    auto& b_node = *n.parents[2];
    if (w_node.requires_grad) {
      detail::MatMap<T>(w_node.grad_buffer().data(), Cout, K).noalias() +=
          dy * detail::CMatMap<T>(cols->data(), K, BN).transpose();
    }
    if (b_node.requires_grad) {
      auto& gb = b_node.grad_buffer();
      for (std::size_t co = 0; co < Cout; ++co) gb[co] += dy.row(co).sum();
    }
    if (in_node.requires_grad) {
      detail::RowMat<T> dcols = detail::CMatMap<T>(w_node.value.data(), Cout, K).transpose() * dy;
      T* gx = in_node.grad_buffer().data();
      for (std::size_t c = 0; c < Cin; ++c)
        for (std::size_t ki = 0; ki < kh; ++ki)
          for (std::size_t kj = 0; kj < kw; ++kj) {
            const T* row = dcols.data() + ((c * kh + ki) * kw + kj) * BN;
            for (std::size_t b = 0; b < B; ++b) {
              T* plane = gx + (b * Cin + c) * H * W;
              const T* src = row + b * N;
              for (std::size_t oy = 0; oy < Ho; ++oy) {
                const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                  const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
                  if (ix >= 0 && ix < static_cast<long>(W)) plane[iy * W + ix] += src[oy * Wo + ox];
                }
              }
            }
          }
    }
  });
}

/// Lower bound on the effective GDN beta.
inline constexpr double kGdnBetaFloor = 1e-6;

/// Generalized divisive normalization over channels at each location:
///   y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)   (inverse multiplies).
/// beta = max(beta_raw^2, floor), gamma = gamma_raw^2, so raw values are unconstrained.
template <class T>
Var<T> gdn(const Var<T>& input, const Var<T>& beta_raw, const Var<T>& gamma_raw, bool inverse) {
  const Shape& xs = input.shape();
  detail::require_rank(xs, 4, "gdn input");
  const std::size_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (beta_raw.value().size() != C) throw DimensionError("gdn: axis beta length != channels");
  if (gamma_raw.value().size() != C * C) throw DimensionError("gdn: axis gamma must be channels x channels");

  std::vector<T> beta(C), gamma(C * C);
  for (std::size_t i = 0; i < C; ++i) {
    const T r = beta_raw.value()[i];
    beta[i] = std::max(r * r, static_cast<T>(kGdnBetaFloor));
  }
  for (std::size_t i = 0; i < C * C; ++i) gamma[i] = gamma_raw.value()[i] * gamma_raw.value()[i];

  auto norm = std::make_shared<std::vector<T>>(B * C * HW);
  Tensor<T> out(xs);
  const T* x = input.value().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t p = 0; p < HW; ++p) {
        T s = beta[i];
        for (std::size_t j = 0; j < C; ++j) {
          const T xj = x[(b * C + j) * HW + p];
          s += gamma[i * C + j] * xj * xj;
        }
        const std::size_t idx = (b * C + i) * HW + p;
        (*norm)[idx] = s;
        out[idx] = inverse ? x[idx] * std::sqrt(s) : x[idx] / std::sqrt(s);
      }

  return make_result<T>(std::move(out), {input, beta_raw, gamma_raw}, [=](Node<T>& n) {
    const T* xv = n.parents[0]->value.data();
    const T* g = n.grad.data();
    // dL/dnorm_i at each location
    std::vector<T> dnorm(B * C * HW);
    for (std::size_t idx = 0; idx < dnorm.size(); ++idx) {
      const T s = (*norm)[idx];
      dnorm[idx] = inverse ? g[idx] * xv[idx] * T(0.5) / std::sqrt(s) : -T(0.5) * g[idx] * xv[idx] / (s * std::sqrt(s));
    }
    if (n.parents[0]->requires_grad) {
      T* gx = n.parents[0]->grad_buffer().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < C; ++k)
          for (std::size_t p = 0; p < HW; ++p) {
            const std::size_t idx = (b * C + k) * HW + p;
            const T s = (*norm)[idx];
            T acc = inverse ? g[idx] * std::sqrt(s) : g[idx] / std::sqrt(s);
            T cross = 0;
            for (std::size_t i = 0; i < C; ++i) cross += dnorm[(b * C + i) * HW + p] * gamma[i * C + k];
            gx[idx] += acc + cross * T(2) * xv[idx];
          }
    }
    if (n.parents[1]->requires_grad) {
      const auto& raw = n.parents[1]->value;
      auto& gb = n.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < C; ++i) {
        if (raw[i] * raw[i] < static_cast<T>(kGdnBetaFloor)) continue;
        T acc = 0;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t p = 0; p < HW; ++p) acc += dnorm[(b * C + i) * HW + p];
        gb[i] += acc * T(2) * raw[i];
      }
    }
    if (n.parents[2]->requires_grad) {
      const auto& raw = n.parents[2]->value;
      auto& gg = n.parents[2]->grad_buffer();
      for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = 0; j < C; ++j) {
          T acc = 0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t p = 0; p < HW; ++p) {
              const T xj = xv[(b * C + j) * HW + p];
              acc += dnorm[(b * C + i) * HW + p] * xj * xj;
            }
          gg[i * C + j] += acc * T(2) * raw[i * C + j];
        }
    }
  });
}

/// Numerically stable softmax along `axis` (max-subtracted).
template <class T>
Var<T> softmax(const Var<T>& input, std::size_t axis) {
  const Shape& s = input.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  Tensor<T> out(s);
  const T* x = input.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T m = x[base];
      for (std::size_t k = 1; k < len; ++k) m = std::max(m, x[base + k * inner]);
      T sum = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(x[base + k * inner] - m);
        out[base + k * inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] *= inv;
    }

  return make_result<T>(std::move(out), {input}, [=](Node<T>& n) {
    auto& gx = n.parents[0]->grad_buffer();
    const T* y = n.value.data();
    const T* g = n.grad.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
  });
}

enum class ResampleMode { kBilinear, kNearest };

namespace detail {

/// Two-tap interpolation table for one axis.
struct AxisTaps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w0, w1;
};

/// Half-pixel (align-corners-false) sample positions: src = (i + 0.5) * in/out - 0.5.
inline AxisTaps make_taps(std::size_t in, std::size_t out, ResampleMode mode) {
  AxisTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w0.resize(out);
  t.w1.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (mode == ResampleMode::kNearest) {
      const std::size_t src = std::min(static_cast<std::size_t>(std::floor((i + 0.5) * ratio)), in - 1);
      t.i0[i] = t.i1[i] = src;
      t.w0[i] = 1.0;
      t.w1[i] = 0.0;
      continue;
    }
    double src = (i + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    t.i0[i] = lo;
    t.i1[i] = hi;
    t.w1[i] = hi == lo ? 0.0 : frac;
    t.w0[i] = 1.0 - t.w1[i];
  }
  return t;
}

}  // namespace detail

/// Resize the spatial axes of [B,C,H,W] by an exact rational factor.
template <class T>
Var<T> resample(const Var<T>& input, Ratio factor, ResampleMode mode) {
  const Shape& xs = input.shape();
  detail::require_rank(xs, 4, "resample input");
  if (factor.num <= 0 || factor.den <= 0) throw ConfigError("resample: factor must be positive");
  const long ho = factor.apply(static_cast<long>(xs[2]));
  const long wo = factor.apply(static_cast<long>(xs[3]));
  if (ho <= 0 || wo <= 0)
    throw ConfigError("resample: factor " + std::to_string(factor.num) + "/" + std::to_string(factor.den) +
                      " gives a non-integral size for " + shape_str(xs));
  const std::size_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const std::size_t Ho = static_cast<std::size_t>(ho), Wo = static_cast<std::size_t>(wo);
  auto ty = std::make_shared<detail::AxisTaps>(detail::make_taps(H, Ho, mode));
  auto tx = std::make_shared<detail::AxisTaps>(detail::make_taps(W, Wo, mode));

  Tensor<T> out({B, C, Ho, Wo});
  const T* x = input.value().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = x + bc * H * W;
    T* dst = out.data() + bc * Ho * Wo;
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      const T* r0 = plane + ty->i0[oy] * W;
      const T* r1 = plane + ty->i1[oy] * W;
      const T wy0 = static_cast<T>(ty->w0[oy]), wy1 = static_cast<T>(ty->w1[oy]);
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const std::size_t a = tx->i0[ox], b = tx->i1[ox];
        const T wx0 = static_cast<T>(tx->w0[ox]), wx1 = static_cast<T>(tx->w1[ox]);
        dst[oy * Wo + ox] = wy0 * (wx0 * r0[a] + wx1 * r0[b]) + wy1 * (wx0 * r1[a] + wx1 * r1[b]);
      }
    }
  }

  return make_result<T>(std::move(out), {input}, [=](Node<T>& n) {
    T* gx = n.parents[0]->grad_buffer().data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      T* plane = gx + bc * H * W;
      const T* g = n.grad.data() + bc * Ho * Wo;
      for (std::size_t oy = 0; oy < Ho; ++oy) {
        T* r0 = plane + ty->i0[oy] * W;
        T* r1 = plane + ty->i1[oy] * W;
        const T wy0 = static_cast<T>(ty->w0[oy]), wy1 = static_cast<T>(ty->w1[oy]);
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          const T go = g[oy * Wo + ox];
          const std::size_t a = tx->i0[ox], b = tx->i1[ox];
          const T wx0 = static_cast<T>(tx->w0[ox]), wx1 = static_cast<T>(tx->w1[ox]);
          r0[a] += go * wy0 * wx0;
          r0[b] += go * wy0 * wx1;
          r1[a] += go * wy1 * wx0;
          r1[b] += go * wy1 * wx1;
        }
      }
    }
  });
}

/// Batched matrix product out[b] = op(a[b]) * op(bm[b]) on rank-3 tensors.
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& bm, bool trans_a, bool trans_b) {
  detail::require_rank(a.shape(), 3, "bmm lhs");
  detail::require_rank(bm.shape(), 3, "bmm rhs");
  const std::size_t B = a.dim(0);
  if (bm.dim(0) != B) throw DimensionError("bmm: axis batch mismatch");
  const std::size_t ar = a.dim(1), ac = a.dim(2), br = bm.dim(1), bc = bm.dim(2);
  const std::size_t M = trans_a ? ac : ar, K = trans_a ? ar : ac;
  const std::size_t Kb = trans_b ? bc : br, N = trans_b ? br : bc;
  if (K != Kb)
    throw DimensionError("bmm: axis inner mismatch " + shape_str(a.shape()) + " x " + shape_str(bm.shape()));

  Tensor<T> out({B, M, N});
  for (std::size_t b = 0; b < B; ++b) {
    detail::CMatMap<T> A(a.value().data() + b * ar * ac, ar, ac);
    detail::CMatMap<T> Bm(bm.value().data() + b * br * bc, br, bc);
    detail::MatMap<T> Cm(out.data() + b * M * N, M, N);
    if (trans_a && trans_b) Cm.noalias() = A.transpose() * Bm.transpose();
    else if (trans_a) Cm.noalias() = A.transpose() * Bm;
    else if (trans_b) Cm.noalias() = A * Bm.transpose();
    else Cm.noalias() = A * Bm;
  }

  return make_result<T>(std::move(out), {a, bm}, [=](Node<T>& n) {
    for (std::size_t b = 0; b < B; ++b) {
      detail::CMatMap<T> dC(n.grad.data() + b * M * N, M, N);
      detail::CMatMap<T> A(n.parents[0]->value.data() + b * ar * ac, ar, ac);
      detail::CMatMap<T> Bm(n.parents[1]->value.data() + b * br * bc, br, bc);
      if (n.parents[0]->requires_grad) {
        detail::MatMap<T> dA(n.parents[0]->grad_buffer().data() + b * ar * ac, ar, ac);
        // d op(A) = dC * op(B)^T
        if (!trans_a && !trans_b) dA.noalias() += dC * Bm.transpose();
        else if (!trans_a && trans_b) dA.noalias() += dC * Bm;
        else if (trans_a && !trans_b) dA.noalias() += Bm * dC.transpose();
        else dA.noalias() += Bm.transpose() * dC.transpose();
      }
      if (n.parents[1]->requires_grad) {
        detail::MatMap<T> dB(n.parents[1]->grad_buffer().data() + b * br * bc, br, bc);
        // d op(B) = op(A)^T * dC
        if (!trans_a && !trans_b) dB.noalias() += A.transpose() * dC;
        else if (trans_a && !trans_b) dB.noalias() += A * dC;
        else if (!trans_a && trans_b) dB.noalias() += dC.transpose() * A;
        else dB.noalias() += dC.transpose() * A.transpose();
      }
    }
  });
}

/// Layer normalization across channels for every spatial token of [B,C,H,W].
template <class T>
Var<T> layer_norm_channels(const Var<T>& input, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-6)) {
  const Shape& xs = input.shape();
  detail::require_rank(xs, 4, "layer_norm input");
  const std::size_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (gain.value().size() != C || bias.value().size() != C)
    throw DimensionError("layer_norm: axis gain/bias length must equal channels");

  auto xhat = std::make_shared<std::vector<T>>(B * C * HW);
  auto rstd = std::make_shared<std::vector<T>>(B * HW);
  Tensor<T> out(xs);
  const T* x = input.value().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < HW; ++p) {
      T mu = 0;
      for (std::size_t c = 0; c < C; ++c) mu += x[(b * C + c) * HW + p];
      mu /= static_cast<T>(C);
      T var = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T d = x[(b * C + c) * HW + p] - mu;
        var += d * d;
      }
      var /= static_cast<T>(C);
      const T r = T(1) / std::sqrt(var + eps);
      (*rstd)[b * HW + p] = r;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (b * C + c) * HW + p;
        (*xhat)[i] = (x[i] - mu) * r;
        out[i] = gain.value()[c] * (*xhat)[i] + bias.value()[c];
      }
    }

  return make_result<T>(std::move(out), {input, gain, bias}, [=](Node<T>& n) {
    const T* g = n.grad.data();
    const auto& gv = n.parents[1]->value;
    if (n.parents[1]->requires_grad || n.parents[2]->requires_grad) {
      std::vector<T> dg(C, T(0)), db(C, T(0));
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < HW; ++p) {
            const std::size_t i = (b * C + c) * HW + p;
            dg[c] += g[i] * (*xhat)[i];
            db[c] += g[i];
          }
      if (n.parents[1]->requires_grad)
        for (std::size_t c = 0; c < C; ++c) n.parents[1]->grad_buffer()[c] += dg[c];
      if (n.parents[2]->requires_grad)
        for (std::size_t c = 0; c < C; ++c) n.parents[2]->grad_buffer()[c] += db[c];
    }
    if (n.parents[0]->requires_grad) {
      T* gx = n.parents[0]->grad_buffer().data();
      const T invC = T(1) / static_cast<T>(C);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < HW; ++p) {
          T m1 = 0, m2 = 0;
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = (b * C + c) * HW + p;
            const T dxh = g[i] * gv[c];
            m1 += dxh;
            m2 += dxh * (*xhat)[i];
          }
          m1 *= invC;
          m2 *= invC;
          const T r = (*rstd)[b * HW + p];
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = (b * C + c) * HW + p;
            gx[i] += r * (g[i] * gv[c] - m1 - (*xhat)[i] * m2);
          }
        }
    }
  });
}

/// Concatenate [B,Ca,H,W] and [B,Cb,H,W] along channels.
template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  detail::require_rank(as, 4, "concat lhs");
  detail::require_rank(bs, 4, "concat rhs");
  if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw DimensionError("concat_channels: axis spatial/batch mismatch " + shape_str(as) + " vs " + shape_str(bs));
  const std::size_t B = as[0], Ca = as[1], Cb = bs[1], HW = as[2] * as[3];
  Tensor<T> out({B, Ca + Cb, as[2], as[3]});
  for (std::size_t n = 0; n < B; ++n) {
    std::copy_n(a.value().data() + n * Ca * HW, Ca * HW, out.data() + n * (Ca + Cb) * HW);
    std::copy_n(b.value().data() + n * Cb * HW, Cb * HW, out.data() + n * (Ca + Cb) * HW + Ca * HW);
  }
  return make_result<T>(std::move(out), {a, b}, [=](Node<T>& nd) {
    for (std::size_t n = 0; n < B; ++n) {
      const T* g = nd.grad.data() + n * (Ca + Cb) * HW;
      if (nd.parents[0]->requires_grad) {
        T* ga = nd.parents[0]->grad_buffer().data() + n * Ca * HW;
        for (std::size_t i = 0; i < Ca * HW; ++i) ga[i] += g[i];
      }
      if (nd.parents[1]->requires_grad) {
        T* gb = nd.parents[1]->grad_buffer().data() + n * Cb * HW;
        for (std::size_t i = 0; i < Cb * HW; ++i) gb[i] += g[Ca * HW + i];
      }
    }
  });
}

}  // namespace imt
