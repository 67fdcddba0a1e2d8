#include <cmath>

#include <doctest.h>

#include "gpdense/pg.hpp"
#include "gpdense/special.hpp"
#include "support.hpp"

using namespace gpdense;

namespace {

double mean_oracle(double c) { return c == 0.0 ? 0.25 : std::tanh(c / 2) / (2 * c); }

double variance_oracle(double c) {
  if (c == 0.0) return 1.0 / 24.0;
  const double sech = 1.0 / std::cosh(c / 2);
  return (std::sinh(c) - c) / (4 * c * c * c) * sech * sech;
}

Eigen::VectorXd draws(double c, int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = sample_pg1(c, rng);
  return v;
}

}  // namespace

TEST_SUITE("pg-random") {
  TEST_CASE("mean formula") {
    CHECK(pg_mean(1, 0.0) == doctest::Approx(0.25));
    CHECK(pg_mean(1, 2.0) == doctest::Approx(std::tanh(1.0) / 4).epsilon(1e-14));
    CHECK(pg_mean(1, 2.0) == doctest::Approx(0.19040).epsilon(1e-4));
    CHECK(pg_mean(3, 1.5) == doctest::Approx(3 * mean_oracle(1.5)).epsilon(1e-14));
    CHECK(pg_mean(1, -2.0) == doctest::Approx(pg_mean(1, 2.0)));
    // Continuity across the small-c branch.
    CHECK(pg_mean(1, 1e-9) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pg_mean(1, 1e-6) == doctest::Approx(mean_oracle(1e-6)).epsilon(1e-10));
  }

  TEST_CASE("sample moments match the closed forms") {
    const int n = 40000;
    std::uint64_t seed = 11;
    for (double c : {0.0, 0.5, 2.0, 6.0, -3.0}) {
      CAPTURE(c);
      const Eigen::VectorXd v = draws(c, n, seed++);
      CHECK((v.array() > 0.0).all());
      const double se = std::sqrt(variance_oracle(c) / n);
      CHECK(std::abs(testing::mean(v) - mean_oracle(c)) < 4 * se);
      // Variance of the sample variance is bounded by the fourth moment; a 10% band suffices.
      CHECK(testing::variance(v) == doctest::Approx(variance_oracle(c)).epsilon(0.1));
    }
  }

  TEST_CASE("Laplace transform") {
    // E[exp(-t w)] = cosh(c/2) / cosh(sqrt(c^2/4 + t/2)) for w ~ PG(1, c).
    const int n = 40000;
    for (double c : {0.0, 1.5}) {
      for (double t : {0.5, 3.0}) {
        CAPTURE(c);
        CAPTURE(t);
        const Eigen::VectorXd v = draws(c, n, 100 + static_cast<std::uint64_t>(10 * c + t));
        const Eigen::VectorXd e = (-t * v.array()).exp();
        const double oracle = std::cosh(c / 2) / std::cosh(std::sqrt(c * c / 4 + t / 2));
        CHECK(std::abs(testing::mean(e) - oracle) < 4 * testing::std_error(e));
      }
    }
  }

  TEST_CASE("distribution depends on |c| only") {
    Rng a = make_rng(5), b = make_rng(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_pg1(1.7, a) == sample_pg1(-1.7, b));
  }

  TEST_CASE("vector overload draws independently per tilt") {
    Rng rng = make_rng(9);
    const Eigen::VectorXd tilts = Eigen::VectorXd::LinSpaced(5, -2, 2);
    const Eigen::VectorXd w = sample_pg1(tilts, rng);
    CHECK(w.size() == 5);
    CHECK((w.array() > 0).all());
    CHECK(sample_pg1(Eigen::VectorXd(0), rng).size() == 0);
  }

  TEST_CASE("sigmoid as a PG scale mixture") {
    const Eigen::VectorXd w = draws(0.0, 100000, 77);
    for (double z : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
      CAPTURE(z);
      const Eigen::VectorXd f = w.unaryExpr([z](double om) { return sigmoid_mixture_integrand(om, z); });
      CHECK(testing::mean(f) == doctest::Approx(sigmoid(z)).epsilon(0.01));
      CHECK(std::abs(testing::mean(f) - sigmoid(z)) <= 4 * testing::std_error(f) + 1e-15);
    }
  }

  TEST_CASE("reproducible for a fixed seed") {
    CHECK(draws(1.0, 50, 3) == draws(1.0, 50, 3));
  }

  TEST_CASE("reference values and exact identities") {
    CHECK(pg_mean(2, 1.0) == doctest::Approx(0.462117).epsilon(1e-6));
    CHECK(pg_mean(1, 2.0) == doctest::Approx(0.190399).epsilon(1e-6));
    for (double om : {0.01, 0.3, 2.0}) CHECK(sigmoid_mixture_integrand(om, 0.0) == 0.5);
    // cosh identity at z = 0: E exp(-z^2 omega / 2) = 1 for every draw.
    const Eigen::VectorXd w = draws(0.0, 1000, 9);
    CHECK(w.unaryExpr([](double om) { return std::exp(-0.0 * om / 2); }).mean() == 1.0);
  }

  TEST_CASE("c and -c give the same law (two-sample test, independent streams)") {
    const Eigen::VectorXd a = draws(1.3, 20000, 101), b = draws(-1.3, 20000, 202);
    std::vector<double> va(a.data(), a.data() + a.size()), vb(b.data(), b.data() + b.size());
    CHECK(testing::ks_statistic(va, vb) < testing::ks_critical(va.size(), vb.size()));
  }
}
