#pragma once

// Two-scale patch discriminator. Each scale returns patch logits and the
// intermediate activations used for feature matching.

#include <vector>

#include "imt/layers.hpp"
#include "imt/model_config.hpp"

namespace imt {

template <class T>
struct DiscriminatorScale {
  std::vector<ConvLayer<T>> features;  // conv + lrelu + pool
  ConvLayer<T> logits;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < features.size(); ++i) features[i].visit(prefix + ".conv" + std::to_string(i), f);
    logits.visit(prefix + ".logits", f);
  }
};

template <class T>
struct DiscriminatorParams {
  ModelConfig config;
  DiscriminatorScale<T> full, half;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    full.visit(prefix + "disc.full", f);
    half.visit(prefix + "disc.half", f);
  }
};

template <class T>
DiscriminatorScale<T> make_disc_scale(Rng& rng) {
  DiscriminatorScale<T> s;
  s.features.push_back(make_conv3<T>(3, 16, rng));
  s.features.push_back(make_conv3<T>(16, 32, rng));
  s.features.push_back(make_conv3<T>(32, 64, rng));
  s.logits = make_conv3<T>(64, 1, rng);
  return s;
}

template <class T>
DiscriminatorParams<T> make_discriminator(const ModelConfig& cfg, Rng& rng) {
  DiscriminatorParams<T> d;
  d.config = cfg;
  d.full = make_disc_scale<T>(rng);
  d.half = make_disc_scale<T>(rng);
  return d;
}

template <class T>
struct DiscriminatorOutput {
  Var<T> logits;
  std::vector<Var<T>> features;
};

template <class T>
DiscriminatorOutput<T> run_disc_scale(const Var<T>& x, const DiscriminatorScale<T>& s) {
  DiscriminatorOutput<T> out;
  Var<T> h = x;
  for (const auto& conv : s.features) {
    h = lrelu(conv(h));
    out.features.push_back(h);
    h = pool2(h);
  }
  out.logits = s.logits(h);
  return out;
}

/// Outputs at scale x1 and x1/2 for images [B,3,H,W].
template <class T>
std::vector<DiscriminatorOutput<T>> discriminate(const Var<T>& images, const DiscriminatorParams<T>& d) {
  require_frame_size(d.config, images.dim(2), images.dim(3), "discriminator");
  return {run_disc_scale(images, d.full), run_disc_scale(pool2(images), d.half)};
}

}  // namespace imt
