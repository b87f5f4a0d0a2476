#pragma once

// Sequence encoder/decoder.
//
// frame 0 -> intra payload. Both sides decode it, extract its compact feature
// and quantize it: that is q_hat_0. Every later frame sends the 36 residuals
// against q_hat_{l-1}; all residuals share one continuously adapting model.

#include <algorithm>
#include <optional>
#include <vector>

#include "imt/bitstream.hpp"
#include "imt/checkpoint.hpp"
#include "imt/quantize.hpp"
#include "imt/range_coder.hpp"

namespace imt {

struct EncodeOptions {
  double qscale = kDefaultQscale;
  IntraCodecConfig intra;
  std::uint16_t fps_num = 25, fps_den = 1;
};

struct DecodeOptions {
  IntraCodecConfig intra;           // only the external decode command is read from here
  bool ignore_model_hash = false;   // decode even if the stream names another checkpoint
};

/// Side information exposed for inspection and tests.
struct CodecTrace {
  Tensor<float> decoded_key;
  std::vector<QuantFeature> q_hat;  // q_hat_0 .. q_hat_{n-1}
  std::vector<std::uint16_t> residual_symbols;
};

namespace detail {

inline QuantFeature key_predictor(const Tensor<float>& decoded_key, Model<float>& m, double qscale) {
  return quantize(extract_compact_feature(decoded_key, m.extractor, 0), qscale);
}

inline void require_sequence(const std::vector<Tensor<float>>& frames, const ModelConfig& cfg) {
  if (frames.empty()) throw DataError("cannot encode an empty sequence");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.rank() != 3 || f.dim(0) != 3)
      throw DimensionError("frame " + std::to_string(i) + " is not [3,H,W]: " + shape_str(f.shape()));
    if (f.shape() != frames[0].shape()) throw DimensionError("frame " + std::to_string(i) + " changes resolution");
  }
  require_frame_size(cfg, frames[0].dim(1), frames[0].dim(2), "encode");
}

}  // namespace detail

inline Bitstream encode_sequence(const std::vector<Tensor<float>>& frames, Model<float>& model,
                                 const EncodeOptions& opt = {}, CodecTrace* trace = nullptr) {
  detail::require_sequence(frames, model.config);
  encode_qscale(opt.qscale);
  if (frames.size() > 0xFFFFFFFFull) throw ConfigError("too many frames");
  InferenceScope scope(model);

  Bitstream bs;
  StreamMeta& m = bs.meta;
  m.width = static_cast<std::uint16_t>(frames[0].dim(2));
  m.height = static_cast<std::uint16_t>(frames[0].dim(1));
  m.frame_count = static_cast<std::uint32_t>(frames.size());
  m.fps_num = opt.fps_num;
  m.fps_den = opt.fps_den;
  m.qscale = opt.qscale;
  m.intra_kind = opt.intra.kind;
  m.intra_qp = static_cast<std::uint8_t>(opt.intra.qp);
  m.model_hash = model_content_hash(model);

  bs.key_payload = intra_encode(frames[0], opt.intra);
  const Tensor<float> key = intra_decode(bs.key_payload, m.width, m.height, opt.intra);
  QuantFeature q_hat = detail::key_predictor(key, model, opt.qscale);
  if (trace) {
    trace->decoded_key = key;
    trace->q_hat = {q_hat};
    trace->residual_symbols.clear();
  }

  RangeEncoder enc;
  AdaptiveModel am(kResidualAlphabet);
  for (std::size_t l = 1; l < frames.size(); ++l) {
    const QuantFeature q = quantize(extract_compact_feature(frames[l], model.extractor, std::uint32_t(l)), opt.qscale);
    const ResidualSymbols r = predict_and_residual(q, q_hat);
    for (auto s : r.symbols) enc.encode_symbol(s, am);
    q_hat = reconstruct(q_hat, r);
    if (trace) {
      trace->q_hat.push_back(q_hat);
      trace->residual_symbols.insert(trace->residual_symbols.end(), r.symbols.begin(), r.symbols.end());
    }
  }
  bs.residual_payload = enc.finish();
  return bs;
}

/// Rebuild q_hat_0..q_hat_{n-1} and the decoded key frame without synthesizing.
inline CodecTrace decode_features(const Bitstream& bs, Model<float>& model, const DecodeOptions& opt = {}) {
  const StreamMeta& m = bs.meta;
  if (!opt.ignore_model_hash && m.model_hash != model_content_hash(model))
    throw BitstreamError(BitstreamErrc::kModelHashMismatch, "stream was encoded with a different checkpoint");
  require_frame_size(model.config, m.height, m.width, "decode");
  InferenceScope scope(model);

  IntraCodecConfig intra = opt.intra;
  intra.kind = m.intra_kind;
  intra.qp = m.intra_qp;
  CodecTrace t;
  t.decoded_key = intra_decode(bs.key_payload, m.width, m.height, intra);
  QuantFeature q_hat = detail::key_predictor(t.decoded_key, model, m.qscale);
  t.q_hat.push_back(q_hat);

  RangeDecoder dec(bs.residual_payload);
  AdaptiveModel am(kResidualAlphabet);
  for (std::uint32_t l = 1; l < m.frame_count; ++l) {
    ResidualSymbols r;
    for (auto& s : r.symbols) s = static_cast<std::uint16_t>(dec.decode_symbol(am));
    q_hat = reconstruct(q_hat, r);
    t.q_hat.push_back(q_hat);
    t.residual_symbols.insert(t.residual_symbols.end(), r.symbols.begin(), r.symbols.end());
  }
  return t;
}

/// Frames from the key frame and compact codes; frame 0 is the decoded key itself.
/// Frames are generated one at a time: batched GEMMs are not bit-identical
/// across batch positions, and equal codes must give equal frames.
inline std::vector<Tensor<float>> synthesize_sequence(const Tensor<float>& decoded_key,
                                                      const std::vector<CompactFeature>& key_and_inter,
                                                      Model<float>& model) {
  InferenceScope scope(model);
  std::vector<Tensor<float>> out{decoded_key};
  if (key_and_inter.size() <= 1) return out;
  const auto& p = model.decoder;
  const Var<float> f_app = appearance_features(as_batch(decoded_key), p);
  const Var<float> f_k = upsample_motion_features(Var<float>::constant(feature_tensor<float>(key_and_inter[0])), p);
  for (std::size_t l = 1; l < key_and_inter.size(); ++l) {
    const Var<float> f_i = upsample_motion_features(Var<float>::constant(feature_tensor<float>(key_and_inter[l])), p);
    const Var<float> frame = generate_frame(transformer_block(cross_attention(f_app, f_k, f_i, p), f_i, p), p);
    const auto& v = frame.value();
    out.push_back(v.reshaped({3, v.dim(2), v.dim(3)}));
  }
  return out;
}

inline std::vector<Tensor<float>> decode_sequence(const Bitstream& bs, Model<float>& model,
                                                  const DecodeOptions& opt = {}, CodecTrace* trace = nullptr) {
  CodecTrace t = decode_features(bs, model, opt);
  std::vector<CompactFeature> codes;
  for (const auto& q : t.q_hat) codes.push_back(dequantize(q, bs.meta.qscale));
  auto frames = synthesize_sequence(t.decoded_key, codes, model);
  if (trace) *trace = std::move(t);
  return frames;
}

}  // namespace imt
