#pragma once

// Parameter-holding building blocks shared by every network.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "imt/nn_ops.hpp"

namespace imt {

using Rng = std::mt19937_64;

inline constexpr float kLeakySlope = 0.2f;

template <class T>
struct ConvLayer {
  Var<T> weight;  // [Cout, Cin, k, k]
  Var<T> bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 0;

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, padding); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

/// Kaiming-uniform (fan-in, leaky-ReLU gain) weights, zero bias.
template <class T>
ConvLayer<T> make_conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t padding,
                       Rng& rng) {
  const double fan_in = static_cast<double>(cin * k * k);
  const double gain = std::sqrt(2.0 / (1.0 + double(kLeakySlope) * kLeakySlope));
  const T bound = static_cast<T>(gain * std::sqrt(3.0 / fan_in));
  ConvLayer<T> c;
  c.weight = Var<T>::parameter(Tensor<T>::uniform({cout, cin, k, k}, -bound, bound, rng));
  c.bias = Var<T>::parameter(Tensor<T>::zeros({cout}));
  c.stride = stride;
  c.padding = padding;
  return c;
}

/// "Same" 3x3 convolution.
template <class T>
ConvLayer<T> make_conv3(std::size_t cin, std::size_t cout, Rng& rng) {
  return make_conv<T>(cin, cout, 3, 1, 1, rng);
}

template <class T>
struct GdnLayer {
  Var<T> beta_raw;   // [C]
  Var<T> gamma_raw;  // [C, C]

  Var<T> operator()(const Var<T>& x, bool inverse = false) const { return gdn(x, beta_raw, gamma_raw, inverse); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".beta_raw", beta_raw);
    f(prefix + ".gamma_raw", gamma_raw);
  }
};

/// beta raw = 1, gamma raw = 0: starts as the identity map.
template <class T>
GdnLayer<T> make_gdn(std::size_t channels) {
  return {Var<T>::parameter(Tensor<T>::ones({channels})),
          Var<T>::parameter(Tensor<T>::zeros({channels, channels}))};
}

template <class T>
struct LayerNormParams {
  Var<T> gain;
  Var<T> bias;

  Var<T> operator()(const Var<T>& x) const { return layer_norm_channels(x, gain, bias); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gain", gain);
    f(prefix + ".bias", bias);
  }
};

template <class T>
LayerNormParams<T> make_layer_norm(std::size_t channels) {
  return {Var<T>::parameter(Tensor<T>::ones({channels})), Var<T>::parameter(Tensor<T>::zeros({channels}))};
}

template <class T>
Var<T> lrelu(const Var<T>& x) {
  return leaky_relu(x, static_cast<T>(kLeakySlope));
}

template <class T>
Var<T> pool2(const Var<T>& x) {
  return resample(x, Ratio{1, 2}, ResampleMode::kBilinear);
}

template <class T>
Var<T> up2(const Var<T>& x) {
  return resample(x, Ratio{2, 1}, ResampleMode::kBilinear);
}

// ---------------------------------------------------------------------------
// Generic parameter plumbing. A params struct exposes visit(prefix, f).

template <class P>
std::size_t count_parameters(P& params) {
  std::size_t n = 0;
  params.visit("", [&](const std::string&, auto& v) { n += v.value().size(); });
  return n;
}

template <class P>
void zero_grads(P& params) {
  params.visit("", [](const std::string&, auto& v) { v.zero_grad(); });
}

template <class P>
void set_trainable(P& params, bool on) {
  params.visit("", [on](const std::string&, auto& v) { v.set_requires_grad(on); });
}

/// Copy every value from `src` into `dst` (same architecture, possibly other precision).
template <class PSrc, class PDst>
void copy_parameters(PSrc& src, PDst& dst) {
  std::vector<std::pair<std::string, Tensor<double>>> values;
  src.visit("", [&](const std::string& name, auto& v) { values.emplace_back(name, v.value().template cast<double>()); });
  std::size_t i = 0;
  dst.visit("", [&](const std::string& name, auto& v) {
    if (i >= values.size() || values[i].first != name || values[i].second.shape() != v.value().shape())
      throw DimensionError("copy_parameters: architecture mismatch at " + name);
    using U = std::decay_t<decltype(v.value()[0])>;
    v.mutable_value() = values[i].second.template cast<U>();
    ++i;
  });
  if (i != values.size()) throw DimensionError("copy_parameters: parameter count mismatch");
}

/// Set every weight to zero and every bias to `bias_value` (biases are the 1-D conv biases).
template <class P>
void fill_conv_parameters(P& params, double weight_value, double bias_value) {
  params.visit("", [&](const std::string& name, auto& v) {
    using U = std::decay_t<decltype(v.value()[0])>;
    const bool is_weight = name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
    const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0 &&
                         name.find("norm") == std::string::npos;
    if (is_weight) v.mutable_value().fill(static_cast<U>(weight_value));
    if (is_bias) v.mutable_value().fill(static_cast<U>(bias_value));
  });
}

}  // namespace imt
