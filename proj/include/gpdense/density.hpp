#pragma once

#include <Eigen/Dense>

#include "gpdense/base_measure.hpp"
#include "gpdense/gibbs.hpp"
#include "gpdense/random.hpp"
#include "gpdense/variational.hpp"

namespace gpdense {

/// Posterior density samples rho_s(x) = sigma(g_s(x)) pi(x) / Z_s at Q points.
struct DensityEstimate {
  Eigen::MatrixXd eval_points;        // Q x d
  Eigen::MatrixXd log_unnormalized;   // S x Q, log sigma(g_s(x)) + log pi(x)
  Eigen::VectorXd normalizer;         // Z_s
  Eigen::VectorXd normalizer_se;      // Monte-Carlo standard error of Z_s
  /// Added to every log density (whitening Jacobian when mapping back to data space).
  double log_jacobian = 0.0;

  Eigen::Index samples() const { return normalizer.size(); }
  /// Largest se(Z_s) / Z_s over the samples.
  double max_relative_error() const;
  bool flagged(double relative_limit = 0.01) const { return max_relative_error() >= relative_limit; }
  /// S x Q matrix of log rho_s(x).
  Eigen::MatrixXd log_density() const;
  /// Posterior mean density at each evaluation point.
  Eigen::VectorXd mean_density() const;
};

/// Importance proposal for the normalizer points: a defensive mixture
/// q = base_weight * pi + (1 - base_weight) * (Gaussian kernels of width `bandwidth` at `centers`).
/// With no centers the points come from pi itself.
struct NormalizerProposal {
  Eigen::MatrixXd centers;
  double bandwidth = 0.0;
  double base_weight = 0.5;

  bool from_base_only() const { return centers.rows() == 0; }
  /// Kernels at `points` with the normal-reference (Silverman) bandwidth.
  static NormalizerProposal around(const Eigen::MatrixXd& points);
  /// log q at every row of `x`.
  Eigen::VectorXd log_density_rows(const BaseMeasure& base, const Eigen::MatrixXd& x) const;
};

struct DensityOptions {
  /// Posterior function draws; <= 0 means every stored Gibbs snapshot.
  int samples = 100;
  int normalizer_points = 5000;
  NormalizerProposal proposal;
  /// Residual-variance cutoff (fraction of the amplitude) for joint conditional draws.
  double residual_tolerance = 1e-8;
};

/// Assembles an estimate from function values: g_eval is S x Q, g_norm is S x R.
DensityEstimate density_from_function_samples(const Eigen::MatrixXd& eval_points,
                                              const Eigen::VectorXd& log_pi_eval,
                                              const Eigen::MatrixXd& g_eval,
                                              const Eigen::MatrixXd& g_norm);

/// Importance estimate of Z_s from points drawn from q, with log w = log(pi / q) (S x R):
/// mean(w sigma(g)) corrected by the weights as a control variate (E[w] = 1).
DensityEstimate density_from_function_samples(const Eigen::MatrixXd& eval_points,
                                              const Eigen::VectorXd& log_pi_eval,
                                              const Eigen::MatrixXd& g_eval,
                                              const Eigen::MatrixXd& g_norm,
                                              const Eigen::MatrixXd& log_weights);

/// Evenly spaced snapshots of `chain`; g drawn jointly at the evaluation and
/// normalizer points given each snapshot's g at observations and latent events.
DensityEstimate posterior_density_samples(const GibbsChain& chain, const Dataset& train,
                                          const Eigen::MatrixXd& eval_points,
                                          const DensityOptions& options, Rng& rng);

/// g_s ~ q2, then g at the evaluation and normalizer points from the GP conditional.
DensityEstimate posterior_density_samples(const SparseVBState& state,
                                          const Eigen::MatrixXd& eval_points,
                                          const DensityOptions& options, Rng& rng);

/// Per-sample sum_n log rho_s(x_n).
Eigen::VectorXd per_sample_log_likelihood(const DensityEstimate& est);

/// log (1/S) sum_s prod_n rho_s(x_n). Throws FlaggedResultError when any
/// normalizer has relative standard error of 1% or more.
double log_expected_test_likelihood(const DensityEstimate& est, double relative_limit = 0.01);

}  // namespace gpdense
