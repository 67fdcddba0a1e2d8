#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace testing {

inline double mean(const Eigen::VectorXd& v) { return v.mean(); }

inline double variance(const Eigen::VectorXd& v) {
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

inline double std_error(const Eigen::VectorXd& v) {
  return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Critical value of the two-sample KS statistic at level alpha = 0.001.
inline double ks_critical(std::size_t n, std::size_t m) {
  const double c = 1.949;  // sqrt(-ln(alpha / 2) / 2)
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

inline Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
inline double mean(const std::vector<double>& v) { return mean(as_vector(v)); }
inline double variance(const std::vector<double>& v) { return variance(as_vector(v)); }
inline double std_error(const std::vector<double>& v) { return std_error(as_vector(v)); }

/// Critical value of the one-sample KS statistic at level alpha = 0.001.
inline double ks_critical(std::size_t n) { return 1.949 / std::sqrt(static_cast<double>(n)); }

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// One-sample KS statistic against a continuous CDF.
template <typename Cdf>
inline double ks_one_sample(std::vector<double> a, Cdf cdf) {
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

/// Trapezoid rule on a uniform grid.
inline double trapezoid(const Eigen::VectorXd& y, double dx) {
  if (y.size() < 2) return 0.0;
  return dx * (y.sum() - 0.5 * (y(0) + y(y.size() - 1)));
}

/// Trapezoid rule for f on [a, b] with n nodes.
template <typename F>
inline double trapezoid(F f, double a, double b, int n) {
  const double dx = (b - a) / (n - 1);
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n - 1; ++i) s += f(a + i * dx);
  return s * dx;
}

}  // namespace testing
