#include "gpdense/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "gpdense/errors.hpp"
#include "gpdense/special.hpp"

namespace gpdense {

double KdeModel::logpdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != points.cols()) throw std::invalid_argument("KDE logpdf: dimension mismatch");
  const double d = static_cast<double>(points.cols());
  const double h2 = bandwidth * bandwidth;
  const Eigen::VectorXd logk =
      -0.5 * (points.rowwise() - x.transpose()).rowwise().squaredNorm().array() / h2;
  return logsumexp(logk) - std::log(static_cast<double>(points.rows())) -
         0.5 * d * std::log(2.0 * std::numbers::pi * h2);
}

Eigen::VectorXd KdeModel::logpdf_rows(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = logpdf(x.row(i).transpose());
  return out;
}

std::vector<double> default_bandwidth_grid(const Dataset& data) {
  const Eigen::MatrixXd& x = data.points();
  const Eigen::Index n = x.rows();
  double scale = 1.0;
  if (n > 1) {
    const Eigen::RowVectorXd mean = x.colwise().mean();
    scale = ((x.rowwise() - mean).colwise().squaredNorm().array() / static_cast<double>(n - 1))
                .sqrt()
                .mean();
  }
  if (!(scale > 0.0)) scale = 1.0;
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i)
    grid[static_cast<std::size_t>(i)] =
        scale * std::exp(std::log(0.05) + (std::log(2.0) - std::log(0.05)) * i / 19.0);
  return grid;
}

std::vector<int> default_component_grid() {
  std::vector<int> k(10);
  std::iota(k.begin(), k.end(), 1);
  return k;
}

std::vector<int> fold_assignment(Eigen::Index n, int folds, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(std::min(j, i))]);
  }
  std::vector<int> label(static_cast<std::size_t>(n));
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    label[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  return label;
}

namespace {

struct Split {
  Eigen::MatrixXd train, test;
};

Split split(const Eigen::MatrixXd& x, const std::vector<int>& label, int fold) {
  const auto n_test = std::count(label.begin(), label.end(), fold);
  Split s{Eigen::MatrixXd(x.rows() - n_test, x.cols()), Eigen::MatrixXd(n_test, x.cols())};
  Eigen::Index a = 0, b = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (label[static_cast<std::size_t>(i)] == fold)
      s.test.row(b++) = x.row(i);
    else
      s.train.row(a++) = x.row(i);
  }
  return s;
}

void check_folds(const Dataset& data, int folds) {
  if (folds < 2) throw UsageError("cross-validation needs at least 2 folds");
  if (data.size() < folds)
    throw UsageError("cross-validation needs at least as many points (" +
                     std::to_string(data.size()) + ") as folds (" + std::to_string(folds) + ")");
}

std::size_t best_index(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace

KdeModel fit_kde(const Dataset& data, double bandwidth) {
  if (!(bandwidth > 0.0)) throw UsageError("KDE bandwidth must be positive");
  if (data.size() < 1) throw UsageError("KDE needs at least one point");
  return {bandwidth, data.points()};
}

KdeFit fit_kde_cv(const Dataset& data, const std::vector<double>& bandwidth_grid, int folds,
                  Rng& rng) {
  if (bandwidth_grid.empty()) throw UsageError("KDE: empty bandwidth grid");
  for (double h : bandwidth_grid)
    if (!(h > 0.0)) throw UsageError("KDE: bandwidths must be positive");
  check_folds(data, folds);
  const std::vector<int> label = fold_assignment(data.size(), folds, rng);
  KdeFit fit;
  fit.candidates = bandwidth_grid;
  fit.scores.assign(bandwidth_grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    const Split s = split(data.points(), label, f);
    for (std::size_t c = 0; c < bandwidth_grid.size(); ++c) {
      const KdeModel m{bandwidth_grid[c], s.train};
      fit.scores[c] += m.logpdf_rows(s.test).sum();
    }
  }
  for (double& v : fit.scores) {
    v /= static_cast<double>(data.size());
    if (std::isnan(v)) v = -std::numeric_limits<double>::infinity();
  }
  fit.model = fit_kde(data, bandwidth_grid[best_index(fit.scores)]);
  return fit;
}

GmmCvFit fit_gmm_cv(const Dataset& data, const std::vector<int>& component_grid, int folds,
                    int restarts, Rng& rng) {
  if (component_grid.empty()) throw UsageError("GMM: empty component grid");
  check_folds(data, folds);
  const std::vector<int> label = fold_assignment(data.size(), folds, rng);
  GmmCvFit fit;
  fit.candidates = component_grid;
  fit.scores.assign(component_grid.size(), 0.0);
  for (std::size_t c = 0; c < component_grid.size(); ++c) {
    double total = 0.0;
    for (int f = 0; f < folds && std::isfinite(total); ++f) {
      const Split s = split(data.points(), label, f);
      try {
        const GmmFit g = fit_gmm(Dataset(s.train), component_grid[c], restarts, rng);
        total += g.mixture.log_density_rows(s.test).sum();
      } catch (const Error&) {
        total = -std::numeric_limits<double>::infinity();
      }
    }
    fit.scores[c] = std::isnan(total) ? -std::numeric_limits<double>::infinity()
                                      : total / static_cast<double>(data.size());
  }
  const std::size_t best = best_index(fit.scores);
  if (!std::isfinite(fit.scores[best]))
    throw NumericalError("GMM: every candidate component count failed cross-validation");
  const int k = component_grid[best];
  fit.model = {fit_gmm(data, k, restarts, rng).mixture, k};
  return fit;
}

}  // namespace gpdense
