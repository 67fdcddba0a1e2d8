#pragma once

#include <functional>

#include <Eigen/Dense>

#include "gpdense/base_measure.hpp"
#include "gpdense/random.hpp"

namespace gpdense {

/// Latent Poisson events x_m with their Polya-Gamma marks omega_m.
struct MarkedEventSet {
  Eigen::MatrixXd locations;  // M x d
  Eigen::VectorXd marks;      // M, all > 0

  Eigen::Index size() const { return marks.size(); }
  static MarkedEventSet empty(Eigen::Index dim) {
    return {Eigen::MatrixXd(0, dim), Eigen::VectorXd(0)};
  }
};

/// Evaluates g jointly at the rows of a candidate matrix.
using FunctionSampler = std::function<Eigen::VectorXd(const Eigen::MatrixXd&, Rng&)>;

/// Prior marked process: M ~ Poisson(lambda), x_m ~ pi, omega_m ~ PG(1, 0).
MarkedEventSet sample_prior_process(double lambda, const BaseMeasure& base, Rng& rng);

/// Result of thinning: the kept events plus g at those events.
struct ThinnedProcess {
  MarkedEventSet events;
  Eigen::VectorXd g_values;
  Eigen::Index candidates = 0;
};

/// Exact draw from the marked Poisson process with intensity
/// lambda pi(x) sigma(-g(x)) PG(omega | 1, g(x)) by thinning candidates from
/// the dominating process lambda pi(x).
ThinnedProcess sample_conditional_process(const FunctionSampler& g, double lambda,
                                          const BaseMeasure& base, Rng& rng);

}  // namespace gpdense
