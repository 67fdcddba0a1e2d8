#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gpdense/base_measure.hpp"
#include "gpdense/random.hpp"

namespace gpdense {

/// Gaussian product-kernel density estimate with one shared bandwidth.
struct KdeModel {
  double bandwidth = 1.0;
  Eigen::MatrixXd points;

  double logpdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd logpdf_rows(const Eigen::MatrixXd& x) const;
};

struct GmmModel {
  BaseMeasure mixture = BaseMeasure::standard_normal(1);
  int components = 1;

  double logpdf(const Eigen::Ref<const Eigen::VectorXd>& x) const { return mixture.log_density(x); }
  Eigen::VectorXd logpdf_rows(const Eigen::MatrixXd& x) const { return mixture.log_density_rows(x); }
};

/// Candidate grid with its mean held-out log likelihood per candidate.
template <typename Model, typename Candidate>
struct CvResult {
  Model model;
  std::vector<Candidate> candidates;
  std::vector<double> scores;
};

using KdeFit = CvResult<KdeModel, double>;
using GmmCvFit = CvResult<GmmModel, int>;

/// 20 log-spaced bandwidths in [0.05, 2] x (mean per-dimension std).
std::vector<double> default_bandwidth_grid(const Dataset& data);
/// 1, ..., 10
std::vector<int> default_component_grid();

/// Random fold label in [0, folds) for each of n points; balanced sizes.
std::vector<int> fold_assignment(Eigen::Index n, int folds, Rng& rng);

KdeModel fit_kde(const Dataset& data, double bandwidth);
KdeFit fit_kde_cv(const Dataset& data, const std::vector<double>& bandwidth_grid, int folds, Rng& rng);

/// K by cross-validated held-out likelihood, then the best of `restarts` EM runs on all data.
GmmCvFit fit_gmm_cv(const Dataset& data, const std::vector<int>& component_grid, int folds,
                    int restarts, Rng& rng);

}  // namespace gpdense
