#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "weight_field.hpp"

namespace fpp {

// Shifted by the first sample, so a constant sample has exactly that mean.
inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  const double x0 = xs.front();
  double s = 0;
  for (double x : xs) s += x - x0;
  return x0 + s / static_cast<double>(xs.size());
}

// Unbiased sample variance (two-pass).
inline double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("variance needs at least two samples");
  const double m = mean(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

struct LineFit {
  double slope = 0;
  double intercept = 0;
};

// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs two or more points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("fit_line: all x equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

struct Interval {
  double low = 0;
  double high = 0;
};

inline constexpr double kZ95 = 1.959963984540054;

// Wilson score interval for hits successes out of n.
inline Interval wilson_interval(std::uint64_t hits, std::uint64_t n, double z = kZ95) {
  if (n == 0 || hits > n) throw std::invalid_argument("wilson_interval: need 0 <= hits <= n, n > 0");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double denom = 1 + z2 / nn;
  const double centre = (p + z2 / (2 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn));
  // The endpoints at hits = 0 and hits = n are exactly 0 and 1.
  return {hits == 0 ? 0.0 : std::max(0.0, centre - half), hits == n ? 1.0 : std::min(1.0, centre + half)};
}

// Empirical quantile with linear interpolation (type 7).
inline double quantile_of(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

// Deterministic index in [0, n) for bootstrap draw (round, i).
inline std::size_t resample_index(std::uint64_t seed, std::uint64_t round, std::uint64_t scale, std::uint64_t i,
                                  std::size_t n) {
  return static_cast<std::size_t>(keyed_hash({seed, round, scale, i}) % n);
}

}  // namespace fpp

namespace fpp {

// Upper tail {T > threshold} or lower tail {T < threshold}.
enum class Side { upper, lower };

inline const char* to_string(Side s) { return s == Side::upper ? "upper" : "lower"; }

}  // namespace fpp
