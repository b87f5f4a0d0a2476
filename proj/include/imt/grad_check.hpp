#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "imt/autodiff.hpp"

namespace imt {

/// kHigh: reverse mode and finite differences both in double.
/// kDefault: reverse mode in float, judged against double finite differences.
enum class Precision { kDefault, kHigh };

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one per input
  double tolerance = 0;
  bool passed = false;
  std::string message;
};

namespace detail {

template <class T, class Fn>
std::vector<Tensor<double>> reverse_grads(Fn& fn, const std::vector<Tensor<double>>& inputs) {
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(Var<T>::parameter(t.template cast<T>()));
  Var<T> out = fn(vars);
  if (out.value().size() != 1) throw DimensionError("grad_check: function must be scalar-valued");
  backward(out);
  std::vector<Tensor<double>> g;
  for (auto& v : vars) g.push_back(v.grad().template cast<double>());
  return g;
}

}  // namespace detail

/// Compare reverse-mode gradients with central differences.
///
/// `fn` is called with a vector of Vars (one per input) and must return a
/// scalar Var. It has to accept Var<double>, and also Var<float> when
/// `mode` is kDefault, so a generic lambda is the usual choice. The error
/// for each input is max|analytic - numeric| / max(|analytic|_inf, |numeric|_inf).
template <class Fn>
GradCheckReport grad_check(Fn&& fn, std::vector<Tensor<double>> inputs, double epsilon, double tolerance,
                           Precision mode = Precision::kHigh) {
  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<Tensor<double>> analytic;
  try {
    analytic = mode == Precision::kHigh ? detail::reverse_grads<double>(fn, inputs)
                                        : detail::reverse_grads<float>(fn, inputs);
  } catch (const std::exception& e) {
    report.message = std::string("reverse pass failed: ") + e.what();
    return report;
  }

  auto eval = [&](const std::vector<Tensor<double>>& xs) {
    std::vector<Var<double>> vars;
    for (const auto& t : xs) vars.push_back(Var<double>::constant(t));
    return fn(vars).value()[0];
  };

  std::ostringstream msg;
  report.passed = true;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double> numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k][i];
      inputs[k][i] = keep + epsilon;
      const double up = eval(inputs);
      inputs[k][i] = keep - epsilon;
      const double down = eval(inputs);
      inputs[k][i] = keep;
      numeric[i] = (up - down) / (2 * epsilon);
    }
    if (!analytic[k].all_finite() || !numeric.all_finite()) {
      report.max_rel_error.push_back(INFINITY);
      report.passed = false;
      msg << "input " << k << ": non-finite gradient; ";
      continue;
    }
    double scale = 0, worst = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[k][i])});
      worst = std::max(worst, std::abs(numeric[i] - analytic[k][i]));
    }
    const double rel = scale < 1e-12 ? 0.0 : worst / scale;
    report.max_rel_error.push_back(rel);
    if (!(rel <= tolerance)) {
      report.passed = false;
      msg << "input " << k << ": rel err " << rel << " > " << tolerance << "; ";
    }
  }
  report.message = report.passed ? "ok" : msg.str();
  return report;
}

}  // namespace imt
