#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace imt::testing {

// Independent model of the adaptive probability state for the entropy oracle.
inline double adaptive_entropy_bits(const std::vector<std::uint16_t>& symbols, std::size_t alphabet) {
  std::vector<double> counts(alphabet, 1.0);
  double total = double(alphabet), bits = 0;
  for (auto s : symbols) {
    bits -= std::log2(counts[s] / total);
    counts[s] += 32;
    total += 32;
    if (total > 65536) {
      total = 0;
      for (auto& c : counts) {
        c = std::max(1.0, std::floor(c / 2));
        total += c;
      }
    }
  }
  return bits;
}

}  // namespace imt::testing
