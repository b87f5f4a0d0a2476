#pragma once

#include <random>

#include "imt/tensor.hpp"

namespace imt::testing {

inline Tensor<double> random_tensor(const Shape& s, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor<double>::uniform(s, lo, hi, rng);
}

template <class T>
Tensor<T> random_tensor_as(const Shape& s, unsigned seed, double lo = -1.0, double hi = 1.0) {
  return random_tensor(s, seed, lo, hi).cast<T>();
}

}  // namespace imt::testing
