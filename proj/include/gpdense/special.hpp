#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace gpdense {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double log_sigmoid(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

inline double log_cosh(double x) {
  x = std::abs(x);
  return x + std::log1p(std::exp(-2.0 * x)) - std::numbers::ln2;
}

/// Digamma function for x > 0.
double digamma(double x);

/// Entropy of Gamma(shape, rate = 1).
double gamma_entropy(double shape);

template <typename Derived>
double logsumexp(const Eigen::DenseBase<Derived>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.derived().array() - m).exp().sum());
}

/// log of the standard normal CDF, accurate in the far lower tail.
double log_normal_cdf(double x);

}  // namespace gpdense
