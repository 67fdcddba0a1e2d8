#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "gpdense/base_measure.hpp"
#include "gpdense/kernel.hpp"
#include "gpdense/point_process.hpp"
#include "gpdense/random.hpp"

namespace gpdense {

/// One state of the augmented Markov chain.
struct GibbsState {
  Eigen::VectorXd g_values;  // g at the N observations, then at the M latent events
  Eigen::VectorXd omega;     // PG variables at the observations
  MarkedEventSet latent;
  double lambda = 1.0;
  KernelParams kernel;
  double mu0 = 0.0;
  BaseMeasure base = BaseMeasure::standard_normal(1);

  /// Observations stacked on top of the latent event locations.
  Eigen::MatrixXd conditioning_points(const Dataset& data) const;
};

struct GibbsConfig {
  int n_samples = 5000;
  int burn_in = 2000;
  /// Hyperparameters are updated every `hyper_interval`-th sweep.
  int hyper_interval = 10;
  /// Random-walk step (log space) for every kernel and base parameter.
  double mh_step = 0.1;
  bool learn_kernel = false;
  /// Support of the log-flat kernel prior: amplitude and every lengthscale lie in [min, max].
  /// Unbounded flat priors leave the posterior improper and the chain drifts off.
  double amplitude_min = 0.05;
  double amplitude_max = 5.0;
  double lengthscale_min = 0.05;
  double lengthscale_max = 5.0;
  bool learn_base = false;
  bool learn_mean = false;
  /// Step-size tuning is confined to burn-in.
  bool adapt_during_burn_in = true;
  std::uint64_t seed = 0;
  /// Snapshot storage cap in doubles; beyond it snapshots are thinned uniformly.
  std::size_t max_stored_values = 40'000'000;
};

struct MhStats {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
};

/// Random-walk state for the Metropolis-Hastings hyperparameter block.
struct HyperMoves {
  Eigen::VectorXd kernel_step;
  Eigen::VectorXd base_step;
  MhStats kernel;
  MhStats base;

  static HyperMoves uniform(const GibbsState& state, double step);
};

struct GibbsChain {
  std::vector<GibbsState> samples;
  /// Post-burn-in sweep index of each stored snapshot.
  std::vector<long> sweep_index;
  int thinning = 1;
  HyperMoves moves;
  double runtime_seconds = 0.0;
};

/// g = 0, lambda = N, latent ~ prior process(lambda, pi), omega ~ PG(1, 0).
GibbsState initial_state(const Dataset& data, const KernelParams& kernel, double mu0,
                         const BaseMeasure& base, Rng& rng);

/// omega_n ~ PG(1, g(x_n)).
void step_omega(GibbsState& state, Eigen::Index n_obs, Rng& rng);

/// Redraws the latent marked process by thinning, with g at the candidates
/// drawn jointly from the GP conditional given the current g values.
void step_latent(GibbsState& state, const Dataset& data, Rng& rng);

/// lambda ~ Gamma(M + N, 1).
void step_lambda(GibbsState& state, Eigen::Index n_obs, Rng& rng);

/// Moments of the g block given omega, marks and hyperparameters.
GaussianMoments<double> gp_conditional(const GibbsState& state, const Dataset& data);

/// g ~ N(mu, Sigma), Sigma = (D + K^{-1})^{-1}, mu = Sigma (u + K^{-1} mu0 1),
/// evaluated through B = I + sqrt(D) K sqrt(D) so D is never inverted.
void step_gp(GibbsState& state, const Dataset& data, Rng& rng);

struct ScalarGaussian {
  double mean = 0.0;
  double variance = 0.0;
};

/// Conditional of mu0 under a flat prior: mean 1'K^{-1}g / 1'K^{-1}1, variance 1 / 1'K^{-1}1.
ScalarGaussian mean_conditional(const GibbsState& state, const Dataset& data);

/// Metropolis-Hastings moves on log kernel parameters and theta_pi, then an
/// exact Gaussian draw of mu0 under a flat prior.
void step_hyper(GibbsState& state, const Dataset& data, const GibbsConfig& config,
                HyperMoves& moves, Rng& rng);

using SampleCallback = std::function<void(const GibbsState&, long sweep)>;

/// Sweeps omega -> latent -> lambda -> g (-> hyperparameters every v-th sweep),
/// discards burn-in and stores the remaining snapshots.
GibbsChain run_chain(const Dataset& data, const GibbsConfig& config, GibbsState init, Rng& rng,
                     const SampleCallback& on_sample = {});

}  // namespace gpdense
