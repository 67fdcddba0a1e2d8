#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gpdense/base_measure.hpp"
#include "gpdense/kernel.hpp"
#include "gpdense/random.hpp"

namespace gpdense {

struct AdamConfig {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct VBConfig {
  int inducing = 200;
  int integration_points = 5000;
  /// Stop once |ELBO_t - ELBO_{t-1}| < tol * |ELBO_{t-1}|.
  double tol = 1e-5;
  int max_iters = 200;
  AdamConfig adam;
  /// Hyperparameters take one Adam step every `hyper_interval` iterations.
  int hyper_interval = 1;
  /// Central finite-difference step in the unconstrained parameter space.
  double fd_step = 1e-4;
  bool learn_kernel = false;
  bool learn_base = false;
  bool learn_mean = false;
  std::uint64_t seed = 0;
};

/// Standard draws behind the integration points, kept fixed for a fit so the
/// points move smoothly (and only) when the base measure changes.
struct IntegrationDraws {
  Eigen::MatrixXd z;  // R x d, N(0, I)
  Eigen::VectorXd u;  // R, U(0, 1)
};

/// q2(g_s) = N(mu, sigma) at the inducing points and q2(lambda) = Gamma(alpha2, 1).
struct SparseVBState {
  Eigen::MatrixXd inducing;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  /// sigma = sigma_factor * sigma_factor^T
  Eigen::MatrixXd sigma_factor;
  double sigma_log_det = 0.0;
  double alpha2 = 1.0;
  KernelParams kernel;
  double mu0 = 0.0;
  BaseMeasure base = BaseMeasure::standard_normal(1);
  IntegrationDraws draws;
  Eigen::MatrixXd integ_points;

  void set_covariance_factor(Eigen::MatrixXd factor, double log_det);
};

/// Everything that depends only on the kernel, the inducing points and the
/// evaluation locations. Rebuilt when any of those change.
struct VBCache {
  Eigen::MatrixXd k_jittered;  // K_s + jitter I
  CholeskyFactor chol;
  Eigen::VectorXd kinv_one;    // K_s^{-1} 1
  Eigen::MatrixXd ks_obs, kt_obs;  // k_s(x_n) and K_s^{-1} k_s(x_n), L x N
  Eigen::VectorXd delta_obs;       // k(x,x) - k_s^T K_s^{-1} k_s
  Eigen::MatrixXd ks_int, kt_int;  // same at the integration points, L x R
  Eigen::VectorXd delta_int;
};

VBCache build_cache(const KernelParams& kernel, const Eigen::MatrixXd& inducing,
                    const Eigen::MatrixXd& observations, const Eigen::MatrixXd& integ_points);

struct Q1Snapshot {
  Eigen::VectorXd c_obs;       // tilts at the observations
  Eigen::VectorXd omega_obs;   // E[omega_n] = pg_mean(1, c_n)
  double lambda1 = 1.0;        // exp(E[ln lambda])
  Eigen::VectorXd c_int;       // c(x_r)
  Eigen::VectorXd g1_int;      // E[g(x_r)]
  Eigen::VectorXd rate;        // r(x_r) = lambda1 sigma(-c) exp((c - g1) / 2)
  Eigen::VectorXd omega_int;   // pg_mean(1, c(x_r))
  Eigen::VectorXd log_pi_int;  // log pi(x_r) under the base used for the points
};

Q1Snapshot update_q1(const SparseVBState& state, const VBCache& cache);

/// alpha2 = N + mean_r r(x_r); returns the new value and stores it.
double update_lambda(SparseVBState& state, const Q1Snapshot& q1, Eigen::Index n_obs);

/// Closed-form q2(g_s): sigma = K (K + M_A)^{-1} K, mu = K (K + M_A)^{-1} (b + mu0 1).
void update_gp(SparseVBState& state, const Q1Snapshot& q1, const VBCache& cache);

struct ElboTerms {
  double observations = 0.0;
  double integral = 0.0;
  double rate = 0.0;  // -E[lambda] + E[ln p(lambda) - ln q(lambda)]
  double kl = 0.0;    // KL(q(g_s) || p(g_s))
  double total() const { return observations + integral + rate - kl; }
};

ElboTerms elbo_terms(const SparseVBState& state, const Q1Snapshot& q1, const VBCache& cache,
                     const Dataset& data);
double elbo(const SparseVBState& state, const Q1Snapshot& q1, const VBCache& cache,
            const Dataset& data);

struct AdamState {
  Eigen::VectorXd m, v, learning_rate;
  int t = 0;
};

/// Packs the learnable hyperparameters: log kernel parameters, mu0, base (mean, log scales).
Eigen::VectorXd hyper_vector(const SparseVBState& state, const VBConfig& config);
void apply_hyper_vector(SparseVBState& state, const VBConfig& config, const Eigen::VectorXd& theta);

/// One Adam ascent step on the ELBO with q1, q2 and the integration draws held
/// fixed. Rebuilds `cache` (and the integration points if the base moved).
void update_hyper(SparseVBState& state, VBCache& cache, const Q1Snapshot& q1, const Dataset& data,
                  const VBConfig& config, AdamState& adam);

/// floor(L/2) draws from `base` plus k-means++/Lloyd centroids of the data.
Eigen::MatrixXd place_inducing(const Dataset& data, const BaseMeasure& base, int count, Rng& rng);

/// Prior start: mu = mu0 1, sigma = K_s, alpha2 = 1.5 N.
SparseVBState initial_vb_state(const Dataset& data, const KernelParams& kernel, double mu0,
                               const BaseMeasure& base, const VBConfig& config, Rng& rng);

struct VBResult {
  SparseVBState state;
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  double runtime_seconds = 0.0;
};

/// Iterates q1 -> lambda -> g (-> hyperparameters) until the relative ELBO change
/// drops below tol or max_iters is reached.
VBResult run_vb(const Dataset& data, const VBConfig& config, SparseVBState init);

}  // namespace gpdense
