#pragma once

#include <Eigen/Dense>

#include "gpdense/random.hpp"

namespace gpdense {

/// Mean of PG(b, c): b tanh(c/2) / (2c), with the limit b/4 at c = 0.
double pg_mean(int b, double c);

/// Exact draw from PG(1, c).
///
/// Devroye-style alternating-series rejection sampler: proposals come from a
/// mixture of a truncated exponential (right of 0.64) and a truncated inverse
/// Gaussian (left of 0.64); acceptance is decided by evaluating partial sums of
/// the Jacobi series until the bound brackets the uniform.
double sample_pg1(double c, Rng& rng);

/// Independent PG(1, c_i) draws for each entry of `tilts`.
Eigen::VectorXd sample_pg1(const Eigen::Ref<const Eigen::VectorXd>& tilts, Rng& rng);

/// exp(z/2 - z^2 omega / 2 - ln 2). Averaged over PG(1, 0) draws this is sigma(z).
double sigmoid_mixture_integrand(double omega, double z);

}  // namespace gpdense
