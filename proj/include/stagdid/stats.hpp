#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace stagdid {

// Critical value used for every reported confidence interval.
inline constexpr double kZ95 = 1.96;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Two-sided p-value against a normal reference. A zero SE degenerates to
// p = 1 when the estimate is also zero and p = 0 otherwise.
inline double two_sided_p(double estimate, double se) {
  if (std::isnan(estimate) || std::isnan(se)) return kNaN;
  if (se <= 0.0) return estimate == 0.0 ? 1.0 : 0.0;
  return 2.0 * normal_cdf(-std::abs(estimate / se));
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return kNaN;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation with the n-1 denominator.
inline double sample_sd(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return kNaN;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

// Linear-interpolation quantile (the "type 7" convention): position
// h = (n-1)q between order statistics.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return kNaN;
  std::sort(xs.begin(), xs.end());
  if (q <= 0.0) return xs.front();
  if (q >= 1.0) return xs.back();
  const double h = static_cast<double>(xs.size() - 1) * q;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= xs.size()) return xs.back();
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

inline std::vector<double> drop_nan(std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs)
    if (!std::isnan(x)) out.push_back(x);
  return out;
}

}  // namespace stagdid
