#pragma once

// Generator objective: weighted sum of feature matching (perceptual stand-in),
// least-squares adversarial and mean-absolute pixel terms; plus the
// least-squares discriminator objective.

#include <vector>

#include "imt/discriminator.hpp"

namespace imt {

struct LossWeights {
  double per = 10, adv = 1, tex = 1000;

  void validate() const {
    if (per < 0 || adv < 0 || tex < 0) throw ConfigError("loss weights must be nonnegative");
  }
};

template <class T>
struct LossComponents {
  Var<T> total, per, adv, tex;
};

/// mean |generated - truth|
template <class T>
Var<T> texture_loss(const Var<T>& generated, const Var<T>& truth) {
  return mean_abs_diff(generated, truth);
}

/// Generator side of the LSGAN objective, averaged over scales.
template <class T>
Var<T> adversarial_loss(const std::vector<DiscriminatorOutput<T>>& fake) {
  std::vector<Var<T>> terms;
  for (const auto& f : fake) terms.push_back(mean_sq_to(f.logits, T(1)));
  return linear_combination(terms, std::vector<T>(terms.size(), T(1) / static_cast<T>(terms.size())));
}

/// Mean absolute difference of intermediate discriminator features; real side is a constant.
template <class T>
Var<T> feature_matching_loss(const std::vector<DiscriminatorOutput<T>>& real,
                             const std::vector<DiscriminatorOutput<T>>& fake) {
  if (real.size() != fake.size()) throw DimensionError("feature matching: scale count mismatch");
  std::vector<Var<T>> terms;
  for (std::size_t s = 0; s < real.size(); ++s) {
    if (real[s].features.size() != fake[s].features.size())
      throw DimensionError("feature matching: layer count mismatch");
    for (std::size_t k = 0; k < real[s].features.size(); ++k)
      terms.push_back(mean_abs_diff(fake[s].features[k], detach(real[s].features[k])));
  }
  return linear_combination(terms, std::vector<T>(terms.size(), T(1) / static_cast<T>(terms.size())));
}

template <class T>
LossComponents<T> total_loss(const Var<T>& generated, const Var<T>& truth,
                             const std::vector<DiscriminatorOutput<T>>& disc_real,
                             const std::vector<DiscriminatorOutput<T>>& disc_fake, const LossWeights& w = {}) {
  w.validate();
  if (generated.shape() != truth.shape())
    throw DimensionError("total_loss: generated " + shape_str(generated.shape()) + " vs truth " +
                         shape_str(truth.shape()));
  LossComponents<T> c;
  c.tex = texture_loss(generated, truth);
  c.adv = adversarial_loss(disc_fake);
  c.per = feature_matching_loss(disc_real, disc_fake);
  c.total = linear_combination<T>({c.per, c.adv, c.tex},
                                  {static_cast<T>(w.per), static_cast<T>(w.adv), static_cast<T>(w.tex)});
  return c;
}

/// mean over scales of 0.5 * [(D(real) - 1)^2 + D(fake)^2]
template <class T>
Var<T> discriminator_loss(const std::vector<DiscriminatorOutput<T>>& real,
                          const std::vector<DiscriminatorOutput<T>>& fake) {
  std::vector<Var<T>> terms;
  for (std::size_t s = 0; s < real.size(); ++s) {
    terms.push_back(mean_sq_to(real[s].logits, T(1)));
    terms.push_back(mean_sq_to(fake[s].logits, T(0)));
  }
  return linear_combination(terms, std::vector<T>(terms.size(), T(1) / static_cast<T>(terms.size())));
}

}  // namespace imt
