#pragma once

// Implicit motion transformation and direct frame generation.
//
// key frame --appearance--> f_app ----------------> V
// theta_K  --upsample----> f_K_motion -----------> K     softmax(Q K^T) V + f_I_motion
// theta_I  --upsample----> f_I_motion -----------> Q
// then a pre-norm transformer block and a conv/upsample generator. Nothing
// here warps pixels; the frame is synthesized from the transformed feature.

#include <cmath>
#include <vector>

#include "imt/feature_extractor.hpp"

namespace imt {

/// Resample factors taking the 6x6 code to S x S.
inline std::vector<Ratio> motion_upsample_plan(std::size_t motion_size) {
  switch (motion_size) {
    case 16: return {{2, 1}, {4, 3}};
    case 24: return {{2, 1}, {2, 1}};
    case 96: return {{2, 1}, {2, 1}, {2, 1}, {2, 1}};
    default: throw ConfigError("no motion up-sampling plan for S = " + std::to_string(motion_size));
  }
}

template <class T>
struct TransformerParams {
  LayerNormParams<T> norm_a, norm_b;
  ConvLayer<T> ff_in, ff_out;  // 1x1, expansion 4

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    norm_a.visit(prefix + ".norm_a", f);
    norm_b.visit(prefix + ".norm_b", f);
    ff_in.visit(prefix + ".ff_in", f);
    ff_out.visit(prefix + ".ff_out", f);
  }
};

template <class T>
struct DecoderParams {
  ModelConfig config;
  std::vector<ConvLayer<T>> appearance;  // H -> S, C_d channels
  ConvLayer<T> motion_in;                // 1 -> C_d at 6x6
  std::vector<ConvLayer<T>> motion_up;   // one per resample step
  std::vector<Ratio> motion_factors;
  ConvLayer<T> proj_q, proj_k, proj_v;
  TransformerParams<T> transformer;
  std::vector<ConvLayer<T>> generator;   // one per x2 step
  ConvLayer<T> generator_out;            // -> 3 channels

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < appearance.size(); ++i)
      appearance[i].visit(prefix + "decoder.appearance" + std::to_string(i), f);
    motion_in.visit(prefix + "decoder.motion_in", f);
    for (std::size_t i = 0; i < motion_up.size(); ++i)
      motion_up[i].visit(prefix + "decoder.motion_up" + std::to_string(i), f);
    proj_q.visit(prefix + "decoder.proj_q", f);
    proj_k.visit(prefix + "decoder.proj_k", f);
    proj_v.visit(prefix + "decoder.proj_v", f);
    transformer.visit(prefix + "decoder.transformer", f);
    for (std::size_t i = 0; i < generator.size(); ++i)
      generator[i].visit(prefix + "decoder.generator" + std::to_string(i), f);
    generator_out.visit(prefix + "decoder.generator_out", f);
  }
};

template <class T>
DecoderParams<T> make_decoder(const ModelConfig& cfg, Rng& rng) {
  const std::size_t C = cfg.feature_channels;
  DecoderParams<T> p;
  p.config = cfg;
  p.appearance.push_back(make_conv3<T>(3, 16, rng));
  p.appearance.push_back(make_conv3<T>(16, 32, rng));
  p.appearance.push_back(make_conv3<T>(32, C, rng));
  p.motion_in = make_conv3<T>(1, C, rng);
  p.motion_factors = motion_upsample_plan(cfg.motion_size());
  for (std::size_t i = 0; i < p.motion_factors.size(); ++i) p.motion_up.push_back(make_conv3<T>(C, C, rng));
  p.proj_q = make_conv<T>(C, C, 1, 1, 0, rng);
  p.proj_k = make_conv<T>(C, C, 1, 1, 0, rng);
  p.proj_v = make_conv<T>(C, C, 1, 1, 0, rng);
  p.transformer.norm_a = make_layer_norm<T>(C);
  p.transformer.norm_b = make_layer_norm<T>(C);
  p.transformer.ff_in = make_conv<T>(C, 4 * C, 1, 1, 0, rng);
  p.transformer.ff_out = make_conv<T>(4 * C, C, 1, 1, 0, rng);
  // S -> H in x2 steps, halving width each time.
  std::size_t side = cfg.motion_size(), ch = C;
  const std::size_t widths[] = {32, 16, 16, 16};
  for (std::size_t i = 0; side < cfg.input_size; ++i, side *= 2) {
    p.generator.push_back(make_conv3<T>(ch, widths[i], rng));
    ch = widths[i];
  }
  p.generator_out = make_conv3<T>(ch, 3, rng);
  return p;
}

/// f_app: conv stack from the decoded key frame [B,3,H,W] to [B,C_d,S,S].
template <class T>
Var<T> appearance_features(const Var<T>& key_frames, const DecoderParams<T>& p) {
  if (key_frames.shape().size() != 4 || key_frames.dim(1) != 3)
    throw DimensionError("appearance_features expects [B,3,H,W], got " + shape_str(key_frames.shape()));
  require_frame_size(p.config, key_frames.dim(2), key_frames.dim(3), "appearance_features");
  Var<T> x = lrelu(p.appearance[0](key_frames));
  x = lrelu(p.appearance[1](pool2(x)));
  return p.appearance[2](pool2(x));
}

/// f_motion: [B,1,6,6] code to [B,C_d,S,S]. Key and inter codes share `p`.
template <class T>
Var<T> upsample_motion_features(const Var<T>& codes, const DecoderParams<T>& p) {
  const Shape& s = codes.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != kCompactSide || s[3] != kCompactSide)
    throw DimensionError("upsample_motion_features expects [B,1,6,6], got " + shape_str(s));
  Var<T> x = p.motion_in(codes);
  for (std::size_t i = 0; i < p.motion_up.size(); ++i) {
    x = p.motion_up[i](resample(lrelu(x), p.motion_factors[i], ResampleMode::kBilinear));
  }
  return x;
}

/// Cross attention with V from appearance, K from the key-frame
/// motion feature and Q from the inter-frame motion feature, plus the
/// inter-frame motion residual. Single head, tokens are spatial positions.
template <class T>
Var<T> cross_attention(const Var<T>& f_app, const Var<T>& f_k_motion, const Var<T>& f_i_motion,
                       const DecoderParams<T>& p) {
  const Shape& s = f_i_motion.shape();
  if (s.size() != 4 || f_app.shape() != s || f_k_motion.shape() != s)
    throw DimensionError("cross_attention: inputs must share [B,C,S,S]: " + shape_str(f_app.shape()) + ", " +
                         shape_str(f_k_motion.shape()) + ", " + shape_str(s));
  const std::size_t B = s[0], C = s[1], N = s[2] * s[3];
  Var<T> v = reshape(p.proj_v(f_app), {B, C, N});
  Var<T> k = reshape(p.proj_k(f_k_motion), {B, C, N});
  Var<T> q = reshape(p.proj_q(f_i_motion), {B, C, N});
  Var<T> logits = bmm(q, k, true, false);  // [B, N_query, N_key]
  if (p.config.attention_scale) logits = scale(logits, T(1) / std::sqrt(static_cast<T>(C)));
  Var<T> attn = softmax(logits, 2);
  Var<T> mixed = bmm(v, attn, false, true);  // [B, C, N_query]
  return add(reshape(mixed, s), f_i_motion);
}

/// Attention weights alone (rows sum to one), for inspection and tests.
template <class T>
Tensor<T> attention_weights(const Var<T>& f_k_motion, const Var<T>& f_i_motion, const DecoderParams<T>& p) {
  const Shape& s = f_i_motion.shape();
  const std::size_t B = s[0], C = s[1], N = s[2] * s[3];
  Var<T> k = reshape(p.proj_k(f_k_motion), {B, C, N});
  Var<T> q = reshape(p.proj_q(f_i_motion), {B, C, N});
  Var<T> logits = bmm(q, k, true, false);
  if (p.config.attention_scale) logits = scale(logits, T(1) / std::sqrt(static_cast<T>(C)));
  return softmax(logits, 2).value();
}

/// h = LN_a(f_atten + f_motion); f_trans = h + FF(LN_b(h)).
template <class T>
Var<T> transformer_block(const Var<T>& f_atten, const Var<T>& f_i_motion, const DecoderParams<T>& p) {
  if (f_atten.shape() != f_i_motion.shape())
    throw DimensionError("transformer_block: shape " + shape_str(f_atten.shape()) + " vs " +
                         shape_str(f_i_motion.shape()));
  const auto& t = p.transformer;
  Var<T> h = t.norm_a(add(f_atten, f_i_motion));
  Var<T> ff = t.ff_out(gelu(t.ff_in(t.norm_b(h))));
  return add(h, ff);
}

/// G_frame: [B,C_d,S,S] -> [B,3,H,W] in [0,1].
template <class T>
Var<T> generate_frame(const Var<T>& f_trans, const DecoderParams<T>& p) {
  const Shape& s = f_trans.shape();
  const std::size_t S = p.config.motion_size();
  if (s.size() != 4 || s[1] != p.config.feature_channels || s[2] != S || s[3] != S)
    throw DimensionError("generate_frame expects [B," + std::to_string(p.config.feature_channels) + "," +
                         std::to_string(S) + "," + std::to_string(S) + "], got " + shape_str(s));
  Var<T> x = f_trans;
  for (const auto& conv : p.generator) x = lrelu(conv(up2(x)));
  return sigmoid(p.generator_out(x));
}

/// Every intermediate of one synthesis pass.
template <class T>
struct SynthesisTrace {
  Var<T> f_app, f_k_motion, f_i_motion, f_atten, f_trans, frame;
};

/// Full decoder-side synthesis from key frames and compact codes (both batched).
template <class T>
SynthesisTrace<T> synthesize(const Var<T>& key_frames, const Var<T>& key_codes, const Var<T>& inter_codes,
                             const DecoderParams<T>& p) {
  SynthesisTrace<T> t;
  t.f_app = appearance_features(key_frames, p);
  t.f_k_motion = upsample_motion_features(key_codes, p);
  t.f_i_motion = upsample_motion_features(inter_codes, p);
  t.f_atten = cross_attention(t.f_app, t.f_k_motion, t.f_i_motion, p);
  t.f_trans = transformer_block(t.f_atten, t.f_i_motion, p);
  t.frame = generate_frame(t.f_trans, p);
  return t;
}

}  // namespace imt
