#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "gpdense/errors.hpp"
#include "gpdense/pg.hpp"
#include "gpdense/variational.hpp"
#include "support.hpp"

using namespace gpdense;

namespace {

KernelParams kernel1(double amp, double ls) {
  return KernelParams::natural(amp, Eigen::VectorXd::Constant(1, ls));
}

Dataset sample_data(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = (i % 2 ? 1.0 : -1.0) + 0.4 * standard_normal(rng);
  return Dataset(x);
}

VBConfig small_config() {
  VBConfig c;
  c.inducing = 12;
  c.integration_points = 400;
  c.max_iters = 60;
  c.tol = 1e-9;
  return c;
}

/// Single inducing point at 0 with state mean mu0 and Sigma = K.
SparseVBState scalar_state(double amp, double mu0) {
  SparseVBState s;
  s.kernel = kernel1(amp, 1.0);
  s.mu0 = mu0;
  s.inducing = Eigen::MatrixXd::Zero(1, 1);
  s.mu = Eigen::VectorXd::Constant(1, mu0);
  s.set_covariance_factor(Eigen::MatrixXd::Constant(1, 1, std::sqrt(amp)), std::log(amp));
  s.integ_points = Eigen::MatrixXd(0, 1);
  s.alpha2 = 1.0;
  return s;
}

}  // namespace

TEST_SUITE("variational") {
  TEST_CASE("q1 update: exp E[ln lambda] for alpha = 1 and the rate at c = 0") {
    SparseVBState s = scalar_state(1e-14, 0.0);
    s.integ_points = Eigen::MatrixXd::Constant(3, 1, 0.0);
    const VBCache cache = build_cache(s.kernel, s.inducing, Eigen::MatrixXd::Zero(1, 1), s.integ_points);
    const Q1Snapshot q = update_q1(s, cache);
    CHECK(q.lambda1 == doctest::Approx(0.561459483566885).epsilon(1e-12));
    CHECK(q.c_obs(0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(q.omega_obs(0) == doctest::Approx(0.25).epsilon(1e-9));
    // r = lambda1 * sigma(0) * exp(0).
    CHECK(q.rate(0) == doctest::Approx(0.5 * 0.561459483566885).epsilon(1e-6));
  }

  TEST_CASE("lambda update: alpha = N + mean rate") {
    SparseVBState s = scalar_state(1.0, 0.0);
    Q1Snapshot q;
    q.rate = Eigen::VectorXd::Constant(50, 5.0);  // lambda1 = 10 at g = c = 0
    q.c_int = Eigen::VectorXd::Zero(50);
    q.g1_int = Eigen::VectorXd::Zero(50);
    CHECK(update_lambda(s, q, 7) == doctest::Approx(12.0));
    CHECK(s.alpha2 == doctest::Approx(12.0));
    q.rate(3) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(update_lambda(s, q, 7), NumericalError);
  }

  TEST_CASE("GP update: scalar case") {
    // K = 4, one observation at the inducing point with E[omega] = 1:
    // Sigma = (1/4 + 1)^{-1} = 0.8, mu = 0.8 * 1/2 = 0.4.
    SparseVBState s = scalar_state(4.0, 0.0);
    const VBCache cache = build_cache(s.kernel, s.inducing, Eigen::MatrixXd::Zero(1, 1), s.integ_points);
    Q1Snapshot q;
    q.omega_obs = Eigen::VectorXd::Ones(1);
    q.rate = q.omega_int = Eigen::VectorXd(0);
    update_gp(s, q, cache);
    CHECK(s.sigma(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.mu(0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(s.sigma_log_det == doctest::Approx(std::log(0.8)).epsilon(1e-12));
  }

  TEST_CASE("GP update matches the natural-parameter oracle") {
    Rng rng = make_rng(41);
    SparseVBState s;
    s.kernel = kernel1(1.5, 0.7);
    s.mu0 = 0.6;
    s.inducing = Eigen::VectorXd::LinSpaced(6, -2, 2);
    s.integ_points = standard_normal_matrix(9, 1, rng);
    const Eigen::MatrixXd obs = standard_normal_matrix(5, 1, rng);
    const VBCache cache = build_cache(s.kernel, s.inducing, obs, s.integ_points);
    Q1Snapshot q;
    q.omega_obs = Eigen::VectorXd::Random(5).cwiseAbs();
    q.rate = Eigen::VectorXd::Random(9).cwiseAbs() * 3;
    q.omega_int = Eigen::VectorXd::Random(9).cwiseAbs();
    update_gp(s, q, cache);

    const Eigen::MatrixXd kinv = cache.k_jittered.inverse();
    Eigen::MatrixXd prec = kinv;
    Eigen::VectorXd eta = kinv * Eigen::VectorXd::Constant(6, s.mu0);
    auto add = [&](const Eigen::MatrixXd& kt, double a, double b, Eigen::Index j) {
      const Eigen::VectorXd t = kt.col(j);
      const double off = s.mu0 * (1.0 - t.sum());
      prec += a * t * t.transpose();
      eta += (b - a * off) * t;
    };
    for (Eigen::Index n = 0; n < 5; ++n) add(cache.kt_obs, q.omega_obs(n), 0.5, n);
    for (Eigen::Index r = 0; r < 9; ++r) add(cache.kt_int, q.rate(r) * q.omega_int(r) / 9, -0.5 * q.rate(r) / 9, r);
    const Eigen::MatrixXd sigma = prec.inverse();
    CHECK((s.sigma - sigma).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((s.mu - sigma * eta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(s.sigma_log_det == doctest::Approx(std::log(sigma.determinant())).epsilon(1e-8));
  }

  TEST_CASE("without observations the GP factor is the prior and KL vanishes") {
    SparseVBState s;
    s.kernel = kernel1(2.0, 0.5);
    s.mu0 = -1.3;
    s.inducing = Eigen::VectorXd::LinSpaced(5, -1, 1);
    s.integ_points = Eigen::MatrixXd(0, 1);
    const Dataset empty(Eigen::MatrixXd(0, 1));
    const VBCache cache = build_cache(s.kernel, s.inducing, empty.points(), s.integ_points);
    Q1Snapshot q;
    q.omega_obs = q.c_obs = q.rate = q.omega_int = Eigen::VectorXd(0);
    q.lambda1 = 1.0;
    update_gp(s, q, cache);
    CHECK((s.mu.array() + 1.3).abs().maxCoeff() < 1e-10);
    CHECK((s.sigma - cache.k_jittered).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(elbo_terms(s, q, cache, empty).kl) < 1e-8);
  }

  TEST_CASE("mu0 gradient of the ELBO matches the analytic form") {
    const Dataset data = sample_data(20, 42);
    Rng rng = make_rng(43);
    VBConfig cfg = small_config();
    SparseVBState s = initial_vb_state(data, kernel1(1.0, 0.6), 0.8, BaseMeasure::standard_normal(1), cfg, rng);
    const VBCache cache = build_cache(s.kernel, s.inducing, data.points(), s.integ_points);
    Q1Snapshot q = update_q1(s, cache);
    update_lambda(s, q, data.size());
    update_gp(s, q, cache);
    q = update_q1(s, cache);

    const auto pred = [&](const Eigen::MatrixXd& kt) {
      return ((kt.transpose() * (s.mu.array() - s.mu0).matrix()).array() + s.mu0).matrix().eval();
    };
    const Eigen::VectorXd m_obs = pred(cache.kt_obs), m_int = pred(cache.kt_int);
    const Eigen::VectorXd a_obs = 1.0 - (cache.kt_obs.colwise().sum()).array().transpose();
    const Eigen::VectorXd a_int = 1.0 - (cache.kt_int.colwise().sum()).array().transpose();
    double grad = 0.0;
    for (Eigen::Index n = 0; n < m_obs.size(); ++n) grad += a_obs(n) * (0.5 - q.omega_obs(n) * m_obs(n));
    double integ = 0.0;
    for (Eigen::Index r = 0; r < m_int.size(); ++r)
      integ += q.rate(r) * a_int(r) * (-0.5 - q.omega_int(r) * m_int(r));
    grad += integ / static_cast<double>(m_int.size());
    grad += cache.kinv_one.dot((s.mu.array() - s.mu0).matrix());

    const double h = 1e-5;
    SparseVBState up = s, down = s;
    up.mu0 += h;
    down.mu0 -= h;
    const double fd = (elbo(up, q, cache, data) - elbo(down, q, cache, data)) / (2 * h);
    CHECK(fd == doctest::Approx(grad).epsilon(1e-4));
  }

  TEST_CASE("fixed-hyperparameter ELBO is monotone and the state stays valid") {
    const Dataset data = sample_data(60, 44);
    Rng rng = make_rng(45);
    const VBConfig cfg = small_config();
    const SparseVBState init = initial_vb_state(data, kernel1(2.0, 0.5), 0.0, BaseMeasure::standard_normal(1), cfg, rng);
    const VBResult r = run_vb(data, cfg, init);
    REQUIRE(r.elbo_trace.size() >= 2);
    for (std::size_t i = 1; i < r.elbo_trace.size(); ++i)
      CHECK(r.elbo_trace[i] >= r.elbo_trace[i - 1] - 1e-9 * std::abs(r.elbo_trace[i - 1]));
    CHECK(r.state.alpha2 >= static_cast<double>(data.size()));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r.state.sigma);
    CHECK(eig.eigenvalues().minCoeff() >= 0.0);
    CHECK(r.state.sigma_log_det == doctest::Approx(eig.eigenvalues().array().log().sum()).epsilon(1e-6));
  }

  TEST_CASE("permuting the observations leaves the fit unchanged") {
    const Dataset data = sample_data(30, 46);
    Rng rng = make_rng(47);
    VBConfig cfg = small_config();
    cfg.max_iters = 10;
    const SparseVBState init = initial_vb_state(data, kernel1(1.0, 0.5), 0.0, BaseMeasure::standard_normal(1), cfg, rng);
    Eigen::MatrixXd shuffled = data.points().colwise().reverse();
    const VBResult a = run_vb(data, cfg, init);
    const VBResult b = run_vb(Dataset(shuffled), cfg, init);
    REQUIRE(a.elbo_trace.size() == b.elbo_trace.size());
    // Agreement up to summation-order rounding, amplified by the conditioning of K_s.
    CHECK(a.elbo_trace.front() == doctest::Approx(b.elbo_trace.front()).epsilon(1e-10));
    CHECK(a.elbo_trace.back() == doctest::Approx(b.elbo_trace.back()).epsilon(1e-7));
    CHECK((a.state.mu - b.state.mu).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("zero learning rate leaves hyperparameters unchanged") {
    const Dataset data = sample_data(30, 48);
    Rng rng = make_rng(49);
    VBConfig cfg = small_config();
    cfg.max_iters = 5;
    cfg.learn_kernel = cfg.learn_mean = cfg.learn_base = true;
    cfg.adam.learning_rate = 0.0;
    const SparseVBState init = initial_vb_state(data, kernel1(1.0, 0.5), 0.3, BaseMeasure::diagonal_gaussian(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)), cfg, rng);
    const VBResult r = run_vb(data, cfg, init);
    CHECK(r.state.kernel.to_vector() == init.kernel.to_vector());
    CHECK(r.state.mu0 == init.mu0);
    CHECK(r.state.base.parameters() == init.base.parameters());
  }

  TEST_CASE("hyperparameter vector round trip respects the learn flags") {
    const Dataset data = sample_data(10, 50);
    Rng rng = make_rng(51);
    VBConfig cfg = small_config();
    cfg.learn_kernel = true;
    cfg.learn_mean = true;
    SparseVBState s = initial_vb_state(data, kernel1(1.0, 0.5), 0.3, BaseMeasure::standard_normal(1), cfg, rng);
    Eigen::VectorXd theta = hyper_vector(s, cfg);
    REQUIRE(theta.size() == 3);
    theta << std::log(2.0), std::log(0.25), -1.0;
    apply_hyper_vector(s, cfg, theta);
    CHECK(s.kernel.amplitude() == doctest::Approx(2.0));
    CHECK(s.kernel.lengthscales()(0) == doctest::Approx(0.25));
    CHECK(s.mu0 == -1.0);
  }

  TEST_CASE("learning hyperparameters raises the ELBO") {
    const Dataset data = sample_data(60, 52);
    Rng rng = make_rng(53);
    VBConfig cfg = small_config();
    cfg.max_iters = 80;
    const SparseVBState init = initial_vb_state(data, kernel1(1.0, 3.0), 0.0, BaseMeasure::standard_normal(1), cfg, rng);
    const VBResult fixed = run_vb(data, cfg, init);
    cfg.learn_kernel = cfg.learn_mean = true;
    const VBResult learned = run_vb(data, cfg, init);
    CHECK(learned.elbo_trace.back() > fixed.elbo_trace.back());
  }

  TEST_CASE("inducing placement") {
    Rng rng = make_rng(54);
    Eigen::MatrixXd x(200, 1);
    for (int i = 0; i < 200; ++i) x(i, 0) = (i < 100 ? -5.0 : 5.0) + 0.1 * standard_normal(rng);
    const BaseMeasure base = BaseMeasure::standard_normal(1);
    const Eigen::MatrixXd z = place_inducing(Dataset(x), base, 4, rng);
    REQUIRE(z.rows() == 4);
    // Two data centroids, one near each cluster.
    const Eigen::VectorXd c = z.bottomRows(2).col(0);
    CHECK(std::abs(c.minCoeff() + 5.0) < 0.1);
    CHECK(std::abs(c.maxCoeff() - 5.0) < 0.1);

    // All-identical data: duplicates are replaced and the kernel stays factorizable.
    const Eigen::MatrixXd same = place_inducing(Dataset(Eigen::MatrixXd::Ones(10, 1)), base, 8, rng);
    CHECK(same.allFinite());
    CHECK_NOTHROW(chol_jitter(kernel_matrix(same, same, kernel1(1.0, 1.0))));
    CHECK_THROWS_AS(place_inducing(Dataset(x), base, 1, rng), UsageError);
  }

  TEST_CASE("run is deterministic") {
    const Dataset data = sample_data(30, 55);
    VBConfig cfg = small_config();
    cfg.learn_kernel = true;
    cfg.max_iters = 15;
    auto run = [&] {
      Rng rng = make_rng(56);
      return run_vb(data, cfg, initial_vb_state(data, kernel1(1.0, 0.5), 0.0, BaseMeasure::standard_normal(1), cfg, rng));
    };
    CHECK(run().elbo_trace == run().elbo_trace);
  }

  TEST_CASE("reference update values") {
    // k = 1, E[omega] = pg_mean(1, 0) = 1/4: Sigma = (1/4 + 1)^{-1} = 0.8, mu = 0.8 / 2 = 0.4.
    SparseVBState s = scalar_state(1.0, 0.0);
    const VBCache cache = build_cache(s.kernel, s.inducing, Eigen::MatrixXd::Zero(1, 1), s.integ_points);
    Q1Snapshot q;
    q.omega_obs = Eigen::VectorXd::Constant(1, pg_mean(1, 0.0));
    q.rate = q.omega_int = Eigen::VectorXd(0);
    update_gp(s, q, cache);
    CHECK(s.sigma(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.mu(0) == doctest::Approx(0.4).epsilon(1e-12));

    // Prior state, observation at an inducing point: c = sqrt(k(x, x)).
    SparseVBState p = scalar_state(2.5, 0.0);
    const VBCache pc = build_cache(p.kernel, p.inducing, Eigen::MatrixXd::Zero(1, 1), p.integ_points);
    CHECK(update_q1(p, pc).c_obs(0) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-9));

    // Zero rate: alpha = N.
    Q1Snapshot z;
    z.rate = Eigen::VectorXd::Zero(10);
    CHECK(update_lambda(p, z, 4) == 4.0);
  }

  TEST_CASE("relabelling inducing points permutes the posterior mean") {
    Rng rng = make_rng(57);
    SparseVBState s;
    s.kernel = kernel1(1.0, 0.6);
    s.mu0 = 0.2;
    s.inducing = standard_normal_matrix(5, 1, rng);
    s.integ_points = standard_normal_matrix(50, 1, rng);
    const Eigen::MatrixXd obs = standard_normal_matrix(8, 1, rng);
    Q1Snapshot q;
    q.omega_obs = Eigen::VectorXd::Constant(8, 0.2);
    q.rate = Eigen::VectorXd::Constant(50, 2.0);
    q.omega_int = Eigen::VectorXd::Constant(50, 0.25);
    SparseVBState r = s;
    r.inducing = s.inducing.colwise().reverse();
    update_gp(s, q, build_cache(s.kernel, s.inducing, obs, s.integ_points));
    update_gp(r, q, build_cache(r.kernel, r.inducing, obs, r.integ_points));
    CHECK((r.mu.reverse() - s.mu).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("GMM base measure stays frozen and max_iters = 0 returns the initial state") {
    const Dataset data = sample_data(30, 58);
    Rng rng = make_rng(59);
    VBConfig cfg = small_config();
    cfg.max_iters = 3;
    cfg.learn_base = true;
    const BaseMeasure gmm = BaseMeasure::gaussian_mixture(
        Eigen::Vector2d(0.5, 0.5), {Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 1.0)},
        {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)});
    const SparseVBState init = initial_vb_state(data, kernel1(1.0, 0.5), 0.0, gmm, cfg, rng);
    CHECK(hyper_vector(init, cfg).size() == 0);
    const VBResult r = run_vb(data, cfg, init);
    CHECK(r.state.base.weights() == gmm.weights());
    cfg.max_iters = 0;
    const VBResult none = run_vb(data, cfg, init);
    CHECK(none.iterations == 0);
    CHECK(none.elbo_trace.empty());
    CHECK(none.state.mu == init.mu);
    CHECK(none.state.alpha2 == 1.5 * 30);
  }

  TEST_CASE("inducing placement: split sizes and the L = 2 centroid") {
    Rng rng = make_rng(60);
    const Dataset data = sample_data(500, 61);
    const BaseMeasure base = BaseMeasure::standard_normal(1);
    const Eigen::MatrixXd z = place_inducing(data, base, 2, rng);
    CHECK(z(1, 0) == doctest::Approx(data.points().col(0).mean()).epsilon(1e-10));
    const Eigen::MatrixXd big = place_inducing(data, base, 200, rng);
    CHECK(big.rows() == 200);
  }

  TEST_CASE("converged ELBO is stable under doubling the integration points") {
    const Dataset data = sample_data(100, 62);
    VBConfig cfg = small_config();
    cfg.inducing = 30;
    cfg.tol = 1e-5;
    cfg.max_iters = 100;
    auto run = [&](int r) {
      cfg.integration_points = r;
      Rng rng = make_rng(63);
      return run_vb(data, cfg, initial_vb_state(data, kernel1(2.0, 0.5), 0.0, BaseMeasure::standard_normal(1), cfg, rng));
    };
    const double a = run(5000).elbo_trace.back(), b = run(10000).elbo_trace.back();
    CHECK(std::abs(a - b) < 0.01 * std::abs(a));
  }
}
