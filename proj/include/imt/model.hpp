#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imt/discriminator.hpp"
#include "imt/feature_extractor.hpp"
#include "imt/imt_decoder.hpp"

namespace imt {

/// Every learned network of the codec. Encoder and decoder share `extractor`.
template <class T>
struct Model {
  ModelConfig config;
  ExtractorParams<T> extractor;
  DecoderParams<T> decoder;
  DiscriminatorParams<T> discriminator;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    extractor.visit(prefix, f);
    decoder.visit(prefix, f);
    discriminator.visit(prefix, f);
  }

  /// Parameters updated by the generator step.
  template <class F>
  void visit_generator(F&& f) {
    extractor.visit("", f);
    decoder.visit("", f);
  }
};

template <class T>
Model<T> make_model(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Model<T> m;
  m.config = cfg;
  m.extractor = make_extractor<T>(cfg, rng);
  m.decoder = make_decoder<T>(cfg, rng);
  m.discriminator = make_discriminator<T>(cfg, rng);
  return m;
}

/// No graph is recorded through the model's parameters while this is alive.
template <class T>
class InferenceScope {
 public:
  explicit InferenceScope(Model<T>& m) : model_(m) {
    model_.visit("", [&](const std::string&, Var<T>& v) {
      saved_.push_back(v.requires_grad());
      v.set_requires_grad(false);
    });
  }
  ~InferenceScope() {
    std::size_t i = 0;
    model_.visit("", [&](const std::string&, Var<T>& v) { v.set_requires_grad(saved_[i++]); });
  }
  InferenceScope(const InferenceScope&) = delete;
  InferenceScope& operator=(const InferenceScope&) = delete;

 private:
  Model<T>& model_;
  std::vector<bool> saved_;
};

/// Same architecture in another precision with identical values.
template <class U, class T>
Model<U> cast_model(Model<T>& src) {
  Model<U> dst = make_model<U>(src.config, 0);
  copy_parameters(src, dst);
  return dst;
}

}  // namespace imt
