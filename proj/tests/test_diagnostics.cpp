#include <cmath>

#include <doctest.h>

#include "gpdense/diagnostics.hpp"
#include "gpdense/errors.hpp"
#include "gpdense/random.hpp"

using namespace gpdense;

namespace {

Eigen::VectorXd ar1(Eigen::Index n, double phi, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::VectorXd x(n);
  x(0) = standard_normal(rng) / std::sqrt(1 - phi * phi);
  for (Eigen::Index i = 1; i < n; ++i) x(i) = phi * x(i - 1) + standard_normal(rng);
  return x;
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("autocorrelation matches the direct definition") {
    const Eigen::VectorXd x = ar1(300, 0.5, 81);
    const Eigen::VectorXd rho = autocorrelation(x, 20);
    const double m = x.mean();
    double c0 = 0.0;
    for (Eigen::Index i = 0; i < 300; ++i) c0 += (x(i) - m) * (x(i) - m);
    for (Eigen::Index k = 0; k <= 20; ++k) {
      double ck = 0.0;
      for (Eigen::Index i = 0; i + k < 300; ++i) ck += (x(i) - m) * (x(i + k) - m);
      CHECK(std::abs(rho(k) - ck / c0) < 1e-10);
    }
  }

  TEST_CASE("AR(1) autocorrelation and effective sample size") {
    const double phi = 0.7;
    const Eigen::VectorXd x = ar1(100000, phi, 82);
    const Eigen::VectorXd rho = autocorrelation(x, 3);
    CHECK(rho(1) == doctest::Approx(phi).epsilon(0.02));
    CHECK(rho(2) == doctest::Approx(phi * phi).epsilon(0.04));
    const double ess = effective_sample_size(x);
    CHECK(ess == doctest::Approx(100000 * (1 - phi) / (1 + phi)).epsilon(0.15));
    const Eigen::VectorXd iid = ar1(20000, 0.0, 83);
    CHECK(effective_sample_size(iid) == doctest::Approx(20000).epsilon(0.15));
  }

  TEST_CASE("degenerate series") {
    Eigen::VectorXd alt(100);
    for (int i = 0; i < 100; ++i) alt(i) = i % 2 ? 1.0 : -1.0;
    CHECK(autocorrelation(alt, 1)(1) == doctest::Approx(-0.99).epsilon(1e-12));
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(50, 3.0);
    const Eigen::VectorXd r = autocorrelation(flat, 5);
    CHECK(r(0) == 1.0);
    CHECK(r.tail(5).norm() == 0.0);
    CHECK_THROWS_AS(autocorrelation(flat, 50), UsageError);
  }

  TEST_CASE("batch means standard error and Geweke statistic") {
    const Eigen::VectorXd iid = ar1(50000, 0.0, 84);
    CHECK(batch_means_se(iid) == doctest::Approx(1.0 / std::sqrt(50000.0)).epsilon(0.3));
    const double phi = 0.9;
    const Eigen::VectorXd x = ar1(200000, phi, 85);
    // Asymptotic sd of the mean: sigma / sqrt(n) * sqrt((1 + phi) / (1 - phi)), sigma^2 = 1 / (1 - phi^2).
    const double se = std::sqrt(1.0 / (1 - phi * phi) * (1 + phi) / (1 - phi) / 200000.0);
    CHECK(batch_means_se(x) == doctest::Approx(se).epsilon(0.35));
    const Eigen::VectorXd a = ar1(5000, 0.0, 86) / std::sqrt(1 - phi * phi);
    CHECK(std::abs(geweke_z(a, x)) < 4.0);
    CHECK(std::abs(geweke_z(a.array() + 1.0, x)) > 4.0);
  }

  TEST_CASE("trace report") {
    const TraceReport r = make_trace_report("lambda", ar1(1000, 0.3, 87), 1.5, 10);
    CHECK(r.autocorrelation.size() == 11);
    CHECK(r.effective_sample_size > 0);
    CHECK(r.runtime_seconds == 1.5);
  }

  TEST_CASE("comparison report flags failures and normalizer warnings") {
    std::vector<MethodResult> in(3);
    in[0] = {"kde", -10.5, 0.2, "", false, 1, 100, 50};
    in[1] = {"vb", -9.8, 3.0, "", true, 1, 100, 50};
    in[2] = {"gibbs", std::nullopt, 0.0, "numerical error", false, 1, 100, 50};
    const auto rows = compare_report(in);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].flags.empty());
    CHECK(rows[1].flags.size() == 1);
    CHECK_FALSE(rows[2].ell_test.has_value());
    const std::string t = format_table(rows);
    CHECK(t.find("numerical error") != std::string::npos);
    CHECK(t.find("-9.8") != std::string::npos);
  }

  TEST_CASE("reference autocorrelations") {
    const Eigen::VectorXd iid = ar1(10000, 0.0, 88);
    const Eigen::VectorXd r0 = autocorrelation(iid, 50);
    CHECK(std::abs(r0(1)) < 0.05);
    CHECK(r0.cwiseAbs().maxCoeff() <= 1.0);
    const Eigen::VectorXd r9 = autocorrelation(ar1(10000, 0.9, 89), 1);
    CHECK(std::abs(r9(1) - 0.9) < 0.05);
  }

  TEST_CASE("compare report rows carry dimension and counts") {
    const auto one = compare_report({{"vb", -3.0, 1.0, "", false, 2, 200, 100}});
    REQUIRE(one.size() == 1);
    CHECK(one[0].dim == 2);
    CHECK(one[0].n_train == 200);
    CHECK(one[0].n_test == 100);
  }
}
