#include <cmath>
#include <numbers>

#include <doctest.h>

#include "gpdense/baselines.hpp"
#include "gpdense/errors.hpp"
#include "support.hpp"

using namespace gpdense;

TEST_SUITE("baselines") {
  TEST_CASE("KDE with one point is a Gaussian of width h") {
    const KdeModel k = fit_kde(Dataset(Eigen::MatrixXd::Zero(1, 1)), 1.0);
    CHECK(k.logpdf(Eigen::VectorXd::Zero(1)) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
    const KdeModel k2 = fit_kde(Dataset(Eigen::MatrixXd::Zero(1, 2)), 0.5);
    CHECK(k2.logpdf(Eigen::Vector2d(0.5, 0.0)) ==
          doctest::Approx(-0.5 - std::log(2 * std::numbers::pi * 0.25)).epsilon(1e-13));
    CHECK_THROWS(fit_kde(Dataset(Eigen::MatrixXd::Zero(1, 1)), 0.0));
  }

  TEST_CASE("KDE integrates to one") {
    Rng rng = make_rng(71);
    const KdeModel k = fit_kde(Dataset(standard_normal_matrix(50, 1, rng)), 0.3);
    const Eigen::MatrixXd grid = Eigen::VectorXd::LinSpaced(4001, -10, 10);
    const Eigen::VectorXd dens = k.logpdf_rows(grid).array().exp();
    CHECK(testing::trapezoid(dens, 20.0 / 4000) == doctest::Approx(1.0).epsilon(1e-8));
  }

  TEST_CASE("KDE bandwidth grid and cross-validation") {
    Rng rng = make_rng(72);
    const Dataset data(standard_normal_matrix(400, 1, rng));
    const auto grid = default_bandwidth_grid(data);
    REQUIRE(grid.size() == 20);
    const double sd = std::sqrt(testing::variance(Eigen::VectorXd(data.points().col(0))));
    CHECK(grid.front() == doctest::Approx(0.05 * sd).epsilon(1e-12));
    CHECK(grid.back() == doctest::Approx(2.0 * sd).epsilon(1e-12));
    CHECK(grid[1] / grid[0] == doctest::Approx(grid[19] / grid[18]).epsilon(1e-12));
    const KdeFit fit = fit_kde_cv(data, grid, 5, rng);
    CHECK(fit.scores.size() == grid.size());
    // Near the normal reference rule 1.06 sd n^{-1/5} = 0.32.
    CHECK(fit.model.bandwidth > 0.15);
    CHECK(fit.model.bandwidth < 0.7);
    CHECK(fit.model.points.rows() == 400);
  }

  TEST_CASE("fold assignment is balanced") {
    Rng rng = make_rng(73);
    const auto f = fold_assignment(23, 5, rng);
    REQUIRE(f.size() == 23);
    std::vector<int> counts(5, 0);
    for (int v : f) {
      REQUIRE(v >= 0);
      REQUIRE(v < 5);
      ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) CHECK((c == 4 || c == 5));
  }

  TEST_CASE("GMM cross-validation picks two components on two clusters") {
    Rng rng = make_rng(74);
    Eigen::MatrixXd x(300, 2);
    for (int i = 0; i < 300; ++i) {
      const double cx = i < 150 ? -3.0 : 3.0;
      x(i, 0) = cx + 0.5 * standard_normal(rng);
      x(i, 1) = 0.5 * standard_normal(rng);
    }
    const GmmCvFit fit = fit_gmm_cv(Dataset(x), {1, 2, 3}, 5, 3, rng);
    CHECK(fit.model.components == 2);
    CHECK(fit.scores[1] > fit.scores[0]);
    CHECK(default_component_grid().size() == 10);
  }

  TEST_CASE("cross-validation needs enough points") {
    Rng rng = make_rng(75);
    CHECK_THROWS_AS(fit_kde_cv(Dataset(Eigen::MatrixXd::Zero(3, 1)), {0.5}, 5, rng), UsageError);
  }

  TEST_CASE("single candidate, duplicated data and K = 1") {
    Rng rng = make_rng(76);
    const Dataset data(standard_normal_matrix(40, 1, rng));
    CHECK(fit_kde_cv(data, {0.37}, 10, rng).model.bandwidth == 0.37);
    Eigen::MatrixXd dup(40, 1);
    for (int i = 0; i < 40; ++i) dup(i, 0) = static_cast<double>(i / 2);
    const KdeFit f = fit_kde_cv(Dataset(dup), {1e-6, 1e-3, 0.5}, 10, rng);
    CHECK(f.model.bandwidth == 0.5);
    const GmmCvFit g = fit_gmm_cv(data, {1}, 10, 2, rng);
    CHECK(g.model.components == 1);
    const Eigen::VectorXd m = data.points().colwise().mean();
    const double var = (data.points().col(0).array() - m(0)).square().mean();
    const double x0 = 0.3;
    CHECK(g.model.logpdf(Eigen::VectorXd::Constant(1, x0)) ==
          doctest::Approx(-0.5 * (x0 - m(0)) * (x0 - m(0)) / var - 0.5 * std::log(2 * std::numbers::pi * var)).epsilon(1e-6));
  }

  TEST_CASE("CV bandwidth near the normal reference rule for N = 500") {
    Rng rng = make_rng(77);
    const Dataset data(standard_normal_matrix(500, 1, rng));
    const auto grid = default_bandwidth_grid(data);
    const KdeFit fit = fit_kde_cv(data, grid, 10, rng);
    const double sd = std::sqrt(testing::variance(Eigen::VectorXd(data.points().col(0))));
    const double silverman = 1.06 * sd * std::pow(500.0, -0.2);
    // Grid neighbourhood: within one log-spaced grid step of the rule.
    const double step = grid[1] / grid[0];
    CHECK(fit.model.bandwidth >= silverman / (step * 1.0001));
    CHECK(fit.model.bandwidth <= silverman * step * 1.0001);
  }

  TEST_CASE("CV is deterministic for a fixed fold seed") {
    const Dataset data([] {
      Rng r = make_rng(78);
      return standard_normal_matrix(100, 2, r);
    }());
    Rng a = make_rng(79), b = make_rng(79);
    CHECK(fit_kde_cv(data, default_bandwidth_grid(data), 10, a).scores ==
          fit_kde_cv(data, default_bandwidth_grid(data), 10, b).scores);
  }
}
