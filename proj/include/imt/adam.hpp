#pragma once

// Bias-corrected Adam. A step whose gradients are not all finite is skipped.

#include <cmath>
#include <string>
#include <vector>

#include "imt/autodiff.hpp"

namespace imt {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::uint64_t step = 0;

  void init(const std::vector<Var<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(Tensor<T>::zeros(p.shape()));
      v.push_back(Tensor<T>::zeros(p.shape()));
    }
    step = 0;
  }
};

/// Returns false (and leaves everything untouched) when a gradient is non-finite.
template <class T>
bool adam_step(std::vector<Var<T>>& params, AdamState<T>& state, const AdamConfig& cfg = {}) {
  if (state.m.empty()) state.init(params);
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i].shape()) throw DimensionError("adam_step: state shape mismatch");
    if (params[i].has_grad() && !params[i].grad().all_finite()) return false;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1 - std::pow(cfg.beta1, t), c2 = 1 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto& p = params[i].mutable_value();
    const bool has = params[i].has_grad();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = has ? static_cast<double>(params[i].grad()[k]) : 0.0;
      const double mk = cfg.beta1 * m[k] + (1 - cfg.beta1) * g;
      const double vk = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      p[k] = static_cast<T>(p[k] - cfg.lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
  return true;
}

}  // namespace imt
