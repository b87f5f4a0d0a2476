#pragma once

// Bjontegaard delta rate: average log-rate gap between two RD curves over
// their common quality interval, with monotone piecewise-cubic (PCHIP)
// interpolation of log10(rate) as a function of quality.

#include <algorithm>
#include <cmath>
#include <vector>

#include "imt/rd.hpp"

namespace imt {

/// Monotone cubic Hermite interpolant through strictly increasing x.
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw DataError("interpolation needs at least two points");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) throw DataError("interpolation abscissae must be strictly increasing");
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0) continue;
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double operator()(double x) const {
    const std::size_t k = segment(x);
    const double h = x_[k + 1] - x_[k], t = (x - x_[k]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return y_[k] * (2 * t3 - 3 * t2 + 1) + h * d_[k] * (t3 - 2 * t2 + t) + y_[k + 1] * (-2 * t3 + 3 * t2) +
           h * d_[k + 1] * (t3 - t2);
  }

  /// Exact integral over [a, b] inside the data range.
  double integrate(double a, double b) const {
    if (a > b) return -integrate(b, a);
    if (a < x_.front() || b > x_.back()) throw DataError("integration outside the interpolation range");
    double total = 0;
    for (std::size_t k = 0; k + 1 < x_.size(); ++k) {
      const double lo = std::max(a, x_[k]), hi = std::min(b, x_[k + 1]);
      if (hi <= lo) continue;
      const double h = x_[k + 1] - x_[k];
      total += h * (antiderivative(k, (hi - x_[k]) / h) - antiderivative(k, (lo - x_[k]) / h));
    }
    return total;
  }

  const std::vector<double>& slopes() const { return d_; }

 private:
  // Three-point end formula, clipped to keep the interpolant shape-preserving.
  static double end_slope(double h0, double h1, double m0, double m1) {
    double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    auto sign = [](double v) { return (v > 0) - (v < 0); };
    if (sign(d) != sign(m0)) d = 0;
    else if (sign(m0) != sign(m1) && std::abs(d) > std::abs(3 * m0)) d = 3 * m0;
    return d;
  }

  std::size_t segment(double x) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin());
    return std::clamp<std::size_t>(i == 0 ? 0 : i - 1, 0, x_.size() - 2);
  }

  // Integral over t in [0, s] of the Hermite form, in units of t.
  double antiderivative(std::size_t k, double s) const {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    const double h = x_[k + 1] - x_[k];
    const double h00 = s - s3 + s4 / 2, h10 = s2 / 2 - 2 * s3 / 3 + s4 / 4;
    const double h01 = s3 - s4 / 2, h11 = -s3 / 3 + s4 / 4;
    return y_[k] * h00 + h * d_[k] * h10 + y_[k + 1] * h01 + h * d_[k + 1] * h11;
  }

  std::vector<double> x_, y_, d_;
};

namespace detail {

/// Quality (negated when lower is better) -> log10(rate), sorted by quality.
inline Pchip log_rate_of_quality(const RDCurve& c) {
  if (c.points.size() < 4)
    throw DataError("BD-rate needs at least 4 points; curve '" + c.label + "' has " +
                    std::to_string(c.points.size()));
  std::vector<std::pair<double, double>> qr;
  for (const auto& p : c.points) {
    if (!(p.bitrate_kbps > 0)) throw DataError("curve '" + c.label + "' has a nonpositive bitrate");
    qr.emplace_back(c.lower_is_better ? -p.metric_value : p.metric_value, std::log10(p.bitrate_kbps));
  }
  std::sort(qr.begin(), qr.end());
  std::vector<double> q, r;
  for (std::size_t i = 0; i < qr.size(); ++i) {
    if (i && qr[i].first == qr[i - 1].first)
      throw DataError("curve '" + c.label + "' repeats quality " + format_number(qr[i].first));
    q.push_back(qr[i].first);
    r.push_back(qr[i].second);
  }
  return Pchip(std::move(q), std::move(r));
}

}  // namespace detail

struct BdInterval {
  double lo, hi;
};

/// Common quality interval (in the oriented quality axis).
inline BdInterval bd_overlap(const RDCurve& anchor, const RDCurve& test) {
  auto range = [](const RDCurve& c) {
    double lo = 1e300, hi = -1e300;
    for (const auto& p : c.points) {
      const double q = c.lower_is_better ? -p.metric_value : p.metric_value;
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    return BdInterval{lo, hi};
  };
  const auto a = range(anchor), t = range(test);
  return {std::max(a.lo, t.lo), std::min(a.hi, t.hi)};
}

/// Percent rate change of `test` against `anchor` at equal quality; negative means savings.
inline double bd_rate(const RDCurve& anchor, const RDCurve& test) {
  if (anchor.metric_name != test.metric_name)
    throw DataError("BD-rate compares one metric; got " + anchor.metric_name + " and " + test.metric_name);
  const Pchip fa = detail::log_rate_of_quality(anchor), ft = detail::log_rate_of_quality(test);
  const BdInterval iv = bd_overlap(anchor, test);
  if (!(iv.hi > iv.lo))
    throw DataError("curves '" + anchor.label + "' and '" + test.label + "' have no overlapping " +
                    anchor.metric_name + " range");
  const double diff = (ft.integrate(iv.lo, iv.hi) - fa.integrate(iv.lo, iv.hi)) / (iv.hi - iv.lo);
  return (std::pow(10.0, diff) - 1.0) * 100.0;
}

}  // namespace imt
