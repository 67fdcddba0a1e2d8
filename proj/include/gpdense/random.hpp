#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace gpdense {

using Rng = std::mt19937_64;

/// Rng for an independent stream derived from a master seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

/// Uniform draw on the open interval (0, 1) using 53 random bits.
inline double uniform01(Rng& rng) {
  double u = 0.0;
  while (u == 0.0) u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u;
}

inline double standard_normal(Rng& rng) {
  const double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double standard_exponential(Rng& rng) { return -std::log(uniform01(rng)); }

inline double gamma_draw(double shape, Rng& rng) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(rng);
}

inline long poisson_draw(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<long> dist(mean);
  return dist(rng);
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = standard_normal(rng);
  return z;
}

inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = standard_normal(rng);
  return z;
}

}  // namespace gpdense
