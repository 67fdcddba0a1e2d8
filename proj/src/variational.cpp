#include "gpdense/variational.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gpdense/errors.hpp"
#include "gpdense/pg.hpp"
#include "gpdense/special.hpp"

namespace gpdense {

void SparseVBState::set_covariance_factor(Eigen::MatrixXd factor, double log_det) {
  sigma_factor = std::move(factor);
  sigma = sigma_factor * sigma_factor.transpose();
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  sigma_log_det = log_det;
}

namespace {

struct Predictive {
  Eigen::VectorXd mean;
  Eigen::VectorXd second;  // E[g^2]
};

Predictive predictive(const SparseVBState& s, const Eigen::MatrixXd& kt,
                      const Eigen::VectorXd& delta) {
  const Eigen::VectorXd centered = (s.mu.array() - s.mu0).matrix();
  Predictive p;
  p.mean = (kt.transpose() * centered).array() + s.mu0;
  const Eigen::MatrixXd projected = s.sigma_factor.transpose() * kt;
  const Eigen::VectorXd var = delta + projected.colwise().squaredNorm().transpose();
  p.second = p.mean.array().square() + var.array();
  return p;
}

Eigen::VectorXd diag_residual(const KernelParams& kernel, const Eigen::MatrixXd& ks,
                              const Eigen::MatrixXd& kt) {
  return (kernel.amplitude() - ks.cwiseProduct(kt).colwise().sum().array())
      .max(0.0)
      .matrix()
      .transpose();
}

void require_finite(double value, const char* term) {
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "variational: ELBO term '" << term << "' is not finite (" << value << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

VBCache build_cache(const KernelParams& kernel, const Eigen::MatrixXd& inducing,
                    const Eigen::MatrixXd& observations, const Eigen::MatrixXd& integ_points) {
  VBCache c;
  const Eigen::MatrixXd k = kernel_matrix(inducing, inducing, kernel);
  c.chol = chol_jitter(k);
  c.k_jittered = k;
  c.k_jittered.diagonal().array() += c.chol.jitter();
  c.kinv_one = c.chol.solve(Eigen::VectorXd::Ones(inducing.rows()));
  c.ks_obs = kernel_matrix(inducing, observations, kernel);
  c.kt_obs = c.chol.solve(c.ks_obs);
  c.delta_obs = diag_residual(kernel, c.ks_obs, c.kt_obs);
  c.ks_int = kernel_matrix(inducing, integ_points, kernel);
  c.kt_int = c.chol.solve(c.ks_int);
  c.delta_int = diag_residual(kernel, c.ks_int, c.kt_int);
  return c;
}

Q1Snapshot update_q1(const SparseVBState& state, const VBCache& cache) {
  Q1Snapshot q;
  const Predictive obs = predictive(state, cache.kt_obs, cache.delta_obs);
  q.c_obs = obs.second.array().max(0.0).sqrt().matrix();
  q.omega_obs = q.c_obs.unaryExpr([](double c) { return pg_mean(1, c); });
  q.lambda1 = std::exp(digamma(state.alpha2));

  const Predictive in = predictive(state, cache.kt_int, cache.delta_int);
  q.g1_int = in.mean;
  q.c_int = in.second.array().max(0.0).sqrt().matrix();
  const Eigen::Index r = q.c_int.size();
  q.rate.resize(r);
  q.omega_int.resize(r);
  const double log_lambda1 = std::log(q.lambda1);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double c = q.c_int(i);
    q.rate(i) = std::exp(log_lambda1 + log_sigmoid(-c) + 0.5 * (c - q.g1_int(i)));
    q.omega_int(i) = pg_mean(1, c);
  }
  q.log_pi_int = state.base.log_density_rows(state.integ_points);
  return q;
}

double update_lambda(SparseVBState& state, const Q1Snapshot& q1, Eigen::Index n_obs) {
  for (Eigen::Index i = 0; i < q1.rate.size(); ++i) {
    if (!std::isfinite(q1.rate(i))) {
      std::ostringstream msg;
      msg << "variational: nonfinite rate at integration point " << i << " (c=" << q1.c_int(i)
          << ", g1=" << q1.g1_int(i) << ")";
      throw NumericalError(msg.str());
    }
  }
  const double mass = q1.rate.size() > 0 ? q1.rate.mean() : 0.0;
  state.alpha2 = static_cast<double>(n_obs) + mass;
  return state.alpha2;
}

void update_gp(SparseVBState& state, const Q1Snapshot& q1, const VBCache& cache) {
  const Eigen::Index r = q1.rate.size();
  const double inv_r = r > 0 ? 1.0 / static_cast<double>(r) : 0.0;

  const Eigen::VectorXd a_obs = q1.omega_obs;
  const Eigen::VectorXd b_obs = Eigen::VectorXd::Constant(a_obs.size(), 0.5);
  const Eigen::VectorXd a_int = inv_r * q1.rate.cwiseProduct(q1.omega_int);
  const Eigen::VectorXd b_int = -0.5 * inv_r * q1.rate;

  // Prior-mean offset of g(x) not carried by g_s: mu0 (1 - kt^T 1).
  const Eigen::VectorXd off_obs =
      state.mu0 * (1.0 - (cache.kt_obs.transpose() * Eigen::VectorXd::Ones(cache.kt_obs.rows())).array());
  const Eigen::VectorXd off_int =
      state.mu0 * (1.0 - (cache.kt_int.transpose() * Eigen::VectorXd::Ones(cache.kt_int.rows())).array());

  Eigen::MatrixXd m = cache.ks_obs * a_obs.asDiagonal() * cache.ks_obs.transpose();
  m.noalias() += cache.ks_int * a_int.asDiagonal() * cache.ks_int.transpose();
  const Eigen::VectorXd b =
      cache.ks_obs * (b_obs - a_obs.cwiseProduct(off_obs)) +
      cache.ks_int * (b_int - a_int.cwiseProduct(off_int));

  Eigen::MatrixXd km = cache.k_jittered + m;
  km = 0.5 * (km + km.transpose()).eval();
  const auto chol_km = chol_jitter(km);
  const Eigen::MatrixXd v = chol_km.solve_lower(cache.k_jittered);  // L^{-1} K
  const Eigen::VectorXd rhs = (b.array() + state.mu0).matrix();
  state.mu = v.transpose() * chol_km.solve_lower(rhs);
  state.set_covariance_factor(v.transpose(),
                              2.0 * cache.chol.log_determinant() - chol_km.log_determinant());
}

ElboTerms elbo_terms(const SparseVBState& state, const Q1Snapshot& q1, const VBCache& cache,
                     const Dataset& data) {
  ElboTerms t;
  const double psi = digamma(state.alpha2);
  const double ln2 = std::numbers::ln2;

  const Predictive obs = predictive(state, cache.kt_obs, cache.delta_obs);
  const Eigen::VectorXd log_pi_obs = state.base.log_density_rows(data.points());
  for (Eigen::Index n = 0; n < obs.mean.size(); ++n) {
    const double c = q1.c_obs(n);
    const double w = q1.omega_obs(n);
    t.observations += psi + log_pi_obs(n) + 0.5 * obs.mean(n) - 0.5 * obs.second(n) * w - ln2 -
                      log_cosh(0.5 * c) + 0.5 * c * c * w;
  }
  require_finite(t.observations, "observations");

  const Eigen::Index r = q1.rate.size();
  if (r > 0) {
    const Predictive in = predictive(state, cache.kt_int, cache.delta_int);
    const Eigen::VectorXd log_pi = state.base.log_density_rows(state.integ_points);
    const double log_lambda1 = std::log(q1.lambda1);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < r; ++i) {
      const double c = q1.c_int(i);
      sum += q1.rate(i) * (psi - log_lambda1 - 0.5 * (in.mean(i) - q1.g1_int(i)) + 1.0 +
                           0.5 * (c * c - in.second(i)) * q1.omega_int(i) + log_pi(i) -
                           q1.log_pi_int(i));
    }
    t.integral = sum / static_cast<double>(r);
  }
  require_finite(t.integral, "integral");

  t.rate = -state.alpha2 - psi + gamma_entropy(state.alpha2);
  require_finite(t.rate, "rate");

  const Eigen::Index l = state.mu.size();
  const Eigen::MatrixXd ws = cache.chol.solve_lower(state.sigma_factor);
  const Eigen::VectorXd wm = cache.chol.solve_lower((state.mu.array() - state.mu0).matrix());
  t.kl = 0.5 * (ws.squaredNorm() + wm.squaredNorm() - static_cast<double>(l) +
                cache.chol.log_determinant() - state.sigma_log_det);
  require_finite(t.kl, "kl");
  return t;
}

double elbo(const SparseVBState& state, const Q1Snapshot& q1, const VBCache& cache,
            const Dataset& data) {
  return elbo_terms(state, q1, cache, data).total();
}

namespace {

bool base_learnable(const SparseVBState& s, const VBConfig& c) {
  return c.learn_base && !s.base.frozen();
}

void refresh_points(SparseVBState& s) {
  if (s.draws.z.rows() > 0) s.integ_points = s.base.map_standard(s.draws.z, s.draws.u);
}

}  // namespace

Eigen::VectorXd hyper_vector(const SparseVBState& state, const VBConfig& config) {
  std::vector<double> v;
  if (config.learn_kernel) {
    const Eigen::VectorXd k = state.kernel.to_vector();
    v.insert(v.end(), k.data(), k.data() + k.size());
  }
  if (config.learn_mean) v.push_back(state.mu0);
  if (base_learnable(state, config)) {
    const Eigen::VectorXd b = state.base.parameters();
    v.insert(v.end(), b.data(), b.data() + b.size());
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void apply_hyper_vector(SparseVBState& state, const VBConfig& config, const Eigen::VectorXd& theta) {
  Eigen::Index at = 0;
  if (config.learn_kernel) {
    const Eigen::Index n = 1 + state.kernel.dim();
    state.kernel = KernelParams::from_vector(theta.segment(at, n));
    at += n;
  }
  if (config.learn_mean) state.mu0 = theta(at++);
  if (base_learnable(state, config)) {
    const Eigen::Index n = state.base.parameters().size();
    state.base = state.base.with_parameters(theta.segment(at, n));
    at += n;
  }
}

namespace {

/// ELBO at hyperparameters `theta` with factors and integration points fixed.
double elbo_at(const SparseVBState& base_state, const Q1Snapshot& q1, const VBCache& cache,
               const Dataset& data, const VBConfig& config, const Eigen::VectorXd& theta,
               bool kernel_moved) {
  SparseVBState s = base_state;
  apply_hyper_vector(s, config, theta);
  try {
    if (kernel_moved) {
      const VBCache c = build_cache(s.kernel, s.inducing, data.points(), s.integ_points);
      return elbo(s, q1, c, data);
    }
    return elbo(s, q1, cache, data);
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

void update_hyper(SparseVBState& state, VBCache& cache, const Q1Snapshot& q1, const Dataset& data,
                  const VBConfig& config, AdamState& adam) {
  const Eigen::VectorXd theta = hyper_vector(state, config);
  const Eigen::Index n = theta.size();
  if (n == 0) return;
  if (adam.m.size() != n) {
    adam.m = Eigen::VectorXd::Zero(n);
    adam.v = Eigen::VectorXd::Zero(n);
    adam.learning_rate = Eigen::VectorXd::Constant(n, config.adam.learning_rate);
    adam.t = 0;
  }
  const Eigen::Index n_kernel = config.learn_kernel ? 1 + state.kernel.dim() : 0;
  const double h = config.fd_step;

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  std::vector<bool> usable(static_cast<std::size_t>(n), true);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd up = theta, down = theta;
    up(i) += h;
    down(i) -= h;
    const bool kernel_moved = i < n_kernel;
    const double fu = elbo_at(state, q1, cache, data, config, up, kernel_moved);
    const double fd = elbo_at(state, q1, cache, data, config, down, kernel_moved);
    if (std::isfinite(fu) && std::isfinite(fd)) {
      grad(i) = (fu - fd) / (2.0 * h);
    } else {
      usable[static_cast<std::size_t>(i)] = false;
      adam.learning_rate(i) *= 0.5;
    }
  }

  ++adam.t;
  const auto& a = config.adam;
  Eigen::VectorXd next = theta;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!usable[static_cast<std::size_t>(i)]) continue;
    adam.m(i) = a.beta1 * adam.m(i) + (1.0 - a.beta1) * grad(i);
    adam.v(i) = a.beta2 * adam.v(i) + (1.0 - a.beta2) * grad(i) * grad(i);
    const double m_hat = adam.m(i) / (1.0 - std::pow(a.beta1, adam.t));
    const double v_hat = adam.v(i) / (1.0 - std::pow(a.beta2, adam.t));
    next(i) += adam.learning_rate(i) * m_hat / (std::sqrt(v_hat) + a.epsilon);
  }
  if (next == theta) return;

  const bool kernel_moved = (next.head(n_kernel) - theta.head(n_kernel)).any();
  const double f_next = elbo_at(state, q1, cache, data, config, next, kernel_moved);
  if (!std::isfinite(f_next)) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (next(i) != theta(i)) adam.learning_rate(i) *= 0.5;
    return;
  }

  const Eigen::VectorXd old_base = state.base.parameters();
  apply_hyper_vector(state, config, next);
  const bool base_moved = state.base.parameters() != old_base;
  if (base_moved) refresh_points(state);
  if (kernel_moved || base_moved)
    cache = build_cache(state.kernel, state.inducing, data.points(), state.integ_points);
}

Eigen::MatrixXd place_inducing(const Dataset& data, const BaseMeasure& base, int count, Rng& rng) {
  if (count < 2) throw UsageError("place_inducing: need at least 2 inducing points");
  if (data.size() < 1) throw UsageError("place_inducing: empty dataset");
  const Eigen::Index d = data.dim();
  const int from_base = count / 2;
  const int k = count - from_base;
  const Eigen::MatrixXd& x = data.points();
  const Eigen::Index n = x.rows();

  Eigen::MatrixXd out(count, d);
  out.topRows(from_base) = base.sample(from_base, rng);

  // k-means++ seeding.
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(x.row(static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n)) % n).transpose());
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i).transpose() - centers[0]).squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    if (!(total > 0.0)) break;  // fewer distinct points than centroids
    double target = uniform01(rng) * total;
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      target -= d2(i);
      if (target <= 0.0 && d2(i) > 0.0) {
        pick = i;
        break;
      }
    }
    if (d2(pick) <= 0.0) {
      for (pick = n - 1; pick > 0 && d2(pick) <= 0.0; --pick) {
      }
    }
    centers.push_back(x.row(pick).transpose());
    for (Eigen::Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (x.row(i).transpose() - centers.back()).squaredNorm());
  }

  // Lloyd iterations.
  const Eigen::Index kc = static_cast<Eigen::Index>(centers.size());
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < kc; ++c) {
        const double dist = (x.row(i).transpose() - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    std::vector<Eigen::VectorXd> sums(static_cast<std::size_t>(kc), Eigen::VectorXd::Zero(d));
    std::vector<int> counts(static_cast<std::size_t>(kc), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
      sums[c] += x.row(i).transpose();
      ++counts[c];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(kc); ++c)
      if (counts[c] > 0) centers[c] = sums[c] / counts[c];
  }

  // Duplicate or missing centroids are replaced by base-measure draws.
  for (int c = 0; c < k; ++c) {
    bool fresh = c < kc;
    if (fresh) {
      for (int prev = 0; prev < c && fresh; ++prev)
        if ((centers[static_cast<std::size_t>(prev)] - centers[static_cast<std::size_t>(c)]).squaredNorm() <= 1e-24)
          fresh = false;
    }
    out.row(from_base + c) = fresh ? centers[static_cast<std::size_t>(c)].transpose()
                                   : base.sample(rng).transpose();
  }
  return out;
}

SparseVBState initial_vb_state(const Dataset& data, const KernelParams& kernel, double mu0,
                               const BaseMeasure& base, const VBConfig& config, Rng& rng) {
  if (data.size() < 1) throw UsageError("variational fit needs at least one observation");
  if (config.inducing < 2 || config.integration_points < 1 || !(config.tol > 0.0) ||
      config.max_iters < 0 || config.hyper_interval < 1)
    throw UsageError(
        "VB config: inducing >= 2, integration_points >= 1, tol > 0, max_iters >= 0 and "
        "hyper_interval >= 1 required");
  if (data.dim() != kernel.dim() || data.dim() != base.dim())
    throw UsageError("VB: data, kernel and base measure dimensions differ");
  SparseVBState s;
  s.kernel = kernel;
  s.mu0 = mu0;
  s.base = base;
  s.inducing = place_inducing(data, base, config.inducing, rng);
  s.draws.z = standard_normal_matrix(config.integration_points, data.dim(), rng);
  s.draws.u.resize(config.integration_points);
  for (Eigen::Index i = 0; i < s.draws.u.size(); ++i) s.draws.u(i) = uniform01(rng);
  refresh_points(s);
  const auto chol = chol_jitter(kernel_matrix(s.inducing, s.inducing, kernel));
  s.mu = Eigen::VectorXd::Constant(config.inducing, mu0);
  s.set_covariance_factor(chol.matrix_l(), chol.log_determinant());
  s.alpha2 = 1.5 * static_cast<double>(data.size());
  return s;
}

VBResult run_vb(const Dataset& data, const VBConfig& config, SparseVBState init) {
  const auto start = std::chrono::steady_clock::now();
  VBResult result;
  result.state = std::move(init);
  SparseVBState& s = result.state;
  VBCache cache = build_cache(s.kernel, s.inducing, data.points(), s.integ_points);
  AdamState adam;
  const bool learn = config.learn_kernel || config.learn_mean || base_learnable(s, config);

  for (int it = 0; it < config.max_iters; ++it) {
    const Q1Snapshot q1 = update_q1(s, cache);
    update_lambda(s, q1, data.size());
    update_gp(s, q1, cache);
    const double value = elbo(s, q1, cache, data);
    result.elbo_trace.push_back(value);
    result.iterations = it + 1;
    if (it > 0) {
      const double prev = result.elbo_trace[result.elbo_trace.size() - 2];
      if (std::abs(value - prev) < config.tol * std::abs(prev)) {
        result.converged = true;
        break;
      }
    }
    if (learn && (it + 1) % config.hyper_interval == 0)
      update_hyper(s, cache, q1, data, config, adam);
  }
  result.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace gpdense
