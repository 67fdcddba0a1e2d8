#include "gpdense/gibbs.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "gpdense/errors.hpp"
#include "gpdense/pg.hpp"

namespace gpdense {

namespace {
constexpr double kLatentTolerance = 1e-10;
}  // namespace

Eigen::MatrixXd GibbsState::conditioning_points(const Dataset& data) const {
  Eigen::MatrixXd x(data.size() + latent.size(), data.dim());
  x << data.points(), latent.locations;
  return x;
}

HyperMoves HyperMoves::uniform(const GibbsState& state, double step) {
  HyperMoves m;
  m.kernel_step = Eigen::VectorXd::Constant(1 + state.kernel.dim(), step);
  m.base_step = Eigen::VectorXd::Constant(state.base.parameters().size(), step);
  return m;
}

GibbsState initial_state(const Dataset& data, const KernelParams& kernel, double mu0,
                         const BaseMeasure& base, Rng& rng) {
  if (data.size() < 1) throw UsageError("Gibbs sampler needs at least one observation");
  if (data.dim() != kernel.dim() || data.dim() != base.dim())
    throw UsageError("Gibbs sampler: data, kernel and base measure dimensions differ");
  GibbsState s;
  s.kernel = kernel;
  s.mu0 = mu0;
  s.base = base;
  s.lambda = static_cast<double>(data.size());
  s.latent = sample_prior_process(s.lambda, base, rng);
  s.omega = sample_pg1(Eigen::VectorXd::Zero(data.size()), rng);
  s.g_values = Eigen::VectorXd::Zero(data.size() + s.latent.size());
  return s;
}

void step_omega(GibbsState& state, Eigen::Index n_obs, Rng& rng) {
  state.omega = sample_pg1(state.g_values.head(n_obs), rng);
}

void step_latent(GibbsState& state, const Dataset& data, Rng& rng) {
  const Eigen::MatrixXd known = state.conditioning_points(data);
  const Eigen::VectorXd g_known = state.g_values;
  // Pivoted low-rank factor: stable when candidates nearly coincide with known points.
  const FunctionSampler g_at = [&](const Eigen::MatrixXd& candidates, Rng& r) {
    return make_conditional_sampler(known, candidates, state.kernel, kLatentTolerance)
        .draw(g_known, state.mu0, r);
  };
  ThinnedProcess thinned = sample_conditional_process(g_at, state.lambda, state.base, rng);
  const Eigen::Index n = data.size();
  Eigen::VectorXd g(n + thinned.events.size());
  g << state.g_values.head(n), thinned.g_values;
  state.g_values = std::move(g);
  state.latent = std::move(thinned.events);
}

void step_lambda(GibbsState& state, Eigen::Index n_obs, Rng& rng) {
  state.lambda = gamma_draw(static_cast<double>(n_obs + state.latent.size()), rng);
}

GaussianMoments<double> gp_conditional(const GibbsState& state, const Dataset& data) {
  const Eigen::Index n_obs = data.size();
  const Eigen::MatrixXd x = state.conditioning_points(data);
  const Eigen::Index n = x.rows();
  Eigen::VectorXd d(n);
  d << state.omega, state.latent.marks;
  const Eigen::VectorXd sd = d.cwiseSqrt();
  Eigen::VectorXd u = Eigen::VectorXd::Constant(n, -0.5);
  u.head(n_obs).setConstant(0.5);

  const Eigen::MatrixXd k = kernel_matrix(x, x, state.kernel);
  Eigen::MatrixXd b = sd.asDiagonal() * k * sd.asDiagonal();
  b.diagonal().array() += 1.0;
  const auto chol_b = chol_jitter(b);
  // c = L_B^{-1} sqrt(D) K, so K sqrt(D) B^{-1} sqrt(D) K = c^T c.
  const Eigen::MatrixXd c = chol_b.solve_lower(sd.asDiagonal() * k);
  Eigen::MatrixXd sigma = k;
  sigma.selfadjointView<Eigen::Lower>().rankUpdate(c.transpose(), -1.0);
  sigma = sigma.selfadjointView<Eigen::Lower>();

  const Eigen::VectorXd shrink = c.transpose() * chol_b.solve_lower(sd);
  const Eigen::VectorXd mean =
      sigma * u + (state.mu0 * (Eigen::VectorXd::Ones(n) - shrink));
  return {mean, sigma};
}

void step_gp(GibbsState& state, const Dataset& data, Rng& rng) {
  // Perturbation draw: with h = K u + f, f ~ N(0, K), e ~ N(0, I),
  // g = mu0 + h - K sqrt(D) B^{-1} (sqrt(D) (h + mu0) + e) has the moments of gp_conditional
  // and needs two Cholesky factors instead of forming and factorising Sigma.
  const Eigen::Index n_obs = data.size();
  const Eigen::MatrixXd x = state.conditioning_points(data);
  const Eigen::Index n = x.rows();
  Eigen::VectorXd d(n);
  d << state.omega, state.latent.marks;
  const Eigen::VectorXd sd = d.cwiseSqrt();
  Eigen::VectorXd u = Eigen::VectorXd::Constant(n, -0.5);
  u.head(n_obs).setConstant(0.5);

  const Eigen::MatrixXd k = kernel_matrix(x, x, state.kernel);
  const auto chol_k = chol_jitter(k);
  Eigen::MatrixXd b = sd.asDiagonal() * k * sd.asDiagonal();
  b.diagonal().array() += 1.0;
  const auto chol_b = chol_jitter(b);

  const Eigen::VectorXd f = chol_k.multiply_lower(standard_normal_vector(n, rng));
  const Eigen::VectorXd e = standard_normal_vector(n, rng);
  const Eigen::VectorXd h = k * u + f;
  const Eigen::VectorXd r = chol_b.solve((sd.cwiseProduct((h.array() + state.mu0).matrix()) + e).eval());
  state.g_values = (h - k * sd.cwiseProduct(r)).array() + state.mu0;
}

ScalarGaussian mean_conditional(const GibbsState& state, const Dataset& data) {
  const Eigen::MatrixXd x = state.conditioning_points(data);
  const auto chol = chol_jitter(kernel_matrix(x, x, state.kernel));
  const Eigen::VectorXd kinv_one = chol.solve(Eigen::VectorXd::Ones(x.rows()));
  const double precision = kinv_one.sum();
  return {kinv_one.dot(state.g_values) / precision, 1.0 / precision};
}

namespace {

double gp_log_prior(const Eigen::VectorXd& g, const Eigen::MatrixXd& x, const KernelParams& p,
                    double mu0) {
  const auto chol = chol_jitter(kernel_matrix(x, x, p));
  const Eigen::VectorXd w = chol.solve_lower((g.array() - mu0).matrix());
  return -0.5 * w.squaredNorm() - 0.5 * chol.log_determinant() -
         0.5 * static_cast<double>(g.size()) * std::log(2.0 * std::numbers::pi);
}

double base_log_target(const BaseMeasure& base, const Eigen::MatrixXd& x) {
  return base.log_density_rows(x).sum();
}

}  // namespace

void step_hyper(GibbsState& state, const Dataset& data, const GibbsConfig& config,
                HyperMoves& moves, Rng& rng) {
  const Eigen::MatrixXd x = state.conditioning_points(data);

  if (config.learn_kernel) {
    const Eigen::VectorXd theta = state.kernel.to_vector();
    Eigen::VectorXd proposal = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      proposal(i) += moves.kernel_step(i) * standard_normal(rng);
    const double log_u = std::log(uniform01(rng));
    ++moves.kernel.proposed;
    const bool inside =
        proposal(0) >= std::log(config.amplitude_min) &&
        proposal(0) <= std::log(config.amplitude_max) &&
        (proposal.tail(proposal.size() - 1).array() >= std::log(config.lengthscale_min)).all() &&
        (proposal.tail(proposal.size() - 1).array() <= std::log(config.lengthscale_max)).all();
    if (proposal == theta) {
      ++moves.kernel.accepted;
    } else if (inside) {
      const KernelParams candidate = KernelParams::from_vector(proposal);
      try {
        const double delta = gp_log_prior(state.g_values, x, candidate, state.mu0) -
                             gp_log_prior(state.g_values, x, state.kernel, state.mu0);
        if (std::isfinite(delta) && log_u < delta) {
          state.kernel = candidate;
          ++moves.kernel.accepted;
        }
      } catch (const NumericalError&) {
        // non-PD kernel matrix: reject
      }
    }
  }

  if (config.learn_base && !state.base.frozen()) {
    const Eigen::VectorXd theta = state.base.parameters();
    Eigen::VectorXd proposal = theta;
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      proposal(i) += moves.base_step(i) * standard_normal(rng);
    const double log_u = std::log(uniform01(rng));
    ++moves.base.proposed;
    if (proposal == theta) {
      ++moves.base.accepted;
    } else {
      const BaseMeasure candidate = state.base.with_parameters(proposal);
      const double delta = base_log_target(candidate, x) - base_log_target(state.base, x);
      if (std::isfinite(delta) && log_u < delta) {
        state.base = candidate;
        ++moves.base.accepted;
      }
    }
  }

  if (config.learn_mean) {
    const ScalarGaussian c = mean_conditional(state, data);
    state.mu0 = c.mean + standard_normal(rng) * std::sqrt(c.variance);
  }
}

namespace {

std::size_t snapshot_values(const GibbsState& s) {
  return static_cast<std::size_t>(s.g_values.size() + s.omega.size() +
                                  s.latent.size() * (s.latent.locations.cols() + 1) + 8);
}

void adapt(Eigen::VectorXd& step, MhStats& window) {
  if (window.proposed < 20) return;
  const double rate = window.rate();
  if (rate > 0.35) step *= 1.25;
  if (rate < 0.2) step *= 0.8;
  window = {};
}

}  // namespace

GibbsChain run_chain(const Dataset& data, const GibbsConfig& config, GibbsState init, Rng& rng,
                     const SampleCallback& on_sample) {
  if (data.size() < 1) throw UsageError("Gibbs sampler needs at least one observation");
  if (config.n_samples < 0 || config.burn_in < 0 || config.hyper_interval < 1)
    throw UsageError("Gibbs config: n_samples, burn_in must be >= 0 and hyper_interval >= 1");
  if (config.learn_kernel) {
    if (!(config.amplitude_min > 0.0 && config.amplitude_min <= config.amplitude_max &&
          config.lengthscale_min > 0.0 && config.lengthscale_min <= config.lengthscale_max))
      throw UsageError("Gibbs config: kernel prior ranges must be positive and ordered");
    const double a = init.kernel.amplitude();
    const Eigen::VectorXd l = init.kernel.lengthscales();
    if (a < config.amplitude_min || a > config.amplitude_max ||
        (l.array() < config.lengthscale_min).any() || (l.array() > config.lengthscale_max).any())
      throw UsageError("Gibbs config: initial kernel lies outside the kernel prior ranges");
  }
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index n = data.size();
  GibbsState state = std::move(init);
  GibbsChain chain;
  chain.moves = HyperMoves::uniform(state, config.mh_step);
  const bool hyper = config.learn_kernel || config.learn_base || config.learn_mean;
  MhStats kernel_window, base_window;
  std::size_t stored_values = 0;

  const long total = static_cast<long>(config.burn_in) + config.n_samples;
  for (long sweep = 0; sweep < total; ++sweep) {
    step_omega(state, n, rng);
    step_latent(state, data, rng);
    step_lambda(state, n, rng);
    step_gp(state, data, rng);
    if (hyper && (sweep + 1) % config.hyper_interval == 0) {
      const MhStats k0 = chain.moves.kernel, b0 = chain.moves.base;
      step_hyper(state, data, config, chain.moves, rng);
      if (sweep < config.burn_in && config.adapt_during_burn_in) {
        kernel_window.proposed += chain.moves.kernel.proposed - k0.proposed;
        kernel_window.accepted += chain.moves.kernel.accepted - k0.accepted;
        base_window.proposed += chain.moves.base.proposed - b0.proposed;
        base_window.accepted += chain.moves.base.accepted - b0.accepted;
        adapt(chain.moves.kernel_step, kernel_window);
        adapt(chain.moves.base_step, base_window);
      }
    }
    if (sweep + 1 == config.burn_in) {
      chain.moves.kernel = {};
      chain.moves.base = {};
    }
    if (sweep < config.burn_in) continue;

    const long index = sweep - config.burn_in;
    if (on_sample) on_sample(state, index);
    if (index % chain.thinning != 0) continue;
    chain.samples.push_back(state);
    chain.sweep_index.push_back(index);
    stored_values += snapshot_values(state);
    if (stored_values > config.max_stored_values && chain.samples.size() > 1) {
      // Keep every other snapshot and double the thinning factor.
      std::vector<GibbsState> kept;
      std::vector<long> kept_index;
      stored_values = 0;
      for (std::size_t i = 0; i < chain.samples.size(); i += 2) {
        stored_values += snapshot_values(chain.samples[i]);
        kept.push_back(std::move(chain.samples[i]));
        kept_index.push_back(chain.sweep_index[i]);
      }
      chain.samples = std::move(kept);
      chain.sweep_index = std::move(kept_index);
      chain.thinning *= 2;
    }
  }
  chain.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return chain;
}

}  // namespace gpdense
