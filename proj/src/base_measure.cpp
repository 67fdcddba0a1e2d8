#include "gpdense/base_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gpdense/errors.hpp"
#include "gpdense/special.hpp"

namespace gpdense {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw UsageError(std::string(what) + ": non-finite entries");
}

}  // namespace

Eigen::MatrixXd Whitening::apply(const Eigen::MatrixXd& points) const {
  return (points.rowwise() - mean.transpose()) * transform.transpose();
}

Eigen::MatrixXd Whitening::invert(const Eigen::MatrixXd& whitened) const {
  const Eigen::MatrixXd x = transform.partialPivLu().solve(whitened.transpose()).transpose();
  return x.rowwise() + mean.transpose();
}

double Whitening::log_abs_det() const {
  return std::log(std::abs(transform.determinant()));
}

Dataset::Dataset(Eigen::MatrixXd points, std::optional<Whitening> whitening)
    : points_(std::move(points)), whitening_(std::move(whitening)) {
  require_finite(points_, "dataset");
}

Dataset whiten(const Dataset& data) {
  const Eigen::Index n = data.size();
  const Eigen::Index d = data.dim();
  if (n < 2) throw UsageError("whiten: need at least 2 points");
  const Eigen::VectorXd mean = data.points().colwise().mean();
  const Eigen::MatrixXd centered = data.points().rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  // Cholesky by hand so that a vanishing pivot names its dimension.
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double pivot = cov(j, j) - l.row(j).head(j).squaredNorm();
    if (!(cov(j, j) > 0.0) || pivot <= 1e-12 * cov(j, j))
      throw NumericalError("whiten: singular sample covariance; dimension " + std::to_string(j) +
                           " is constant or collinear with earlier dimensions");
    l(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < d; ++i)
      l(i, j) = (cov(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  Whitening w;
  w.mean = mean;
  w.transform = l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
  return Dataset(w.apply(data.points()), w);
}

// ---------------------------------------------------------------------------

BaseMeasure BaseMeasure::standard_normal(Eigen::Index dim) {
  if (dim < 1) throw UsageError("standard normal base measure needs dim >= 1");
  BaseMeasure m;
  m.kind_ = BaseKind::StandardNormal;
  m.mean_ = Eigen::VectorXd::Zero(dim);
  m.scales_ = Eigen::VectorXd::Ones(dim);
  return m;
}

BaseMeasure BaseMeasure::diagonal_gaussian(Eigen::VectorXd mean, Eigen::VectorXd scales) {
  if (mean.size() < 1 || mean.size() != scales.size())
    throw UsageError("diagonal Gaussian: mean and scales must have equal positive length");
  if (!mean.allFinite() || !scales.allFinite() || (scales.array() <= 0.0).any())
    throw UsageError("diagonal Gaussian: scales must be finite and positive");
  BaseMeasure m;
  m.kind_ = BaseKind::DiagonalGaussian;
  m.mean_ = std::move(mean);
  m.scales_ = std::move(scales);
  return m;
}

BaseMeasure BaseMeasure::gaussian_mixture(Eigen::VectorXd weights,
                                          std::vector<Eigen::VectorXd> means,
                                          std::vector<Eigen::MatrixXd> covariances) {
  const auto k = static_cast<std::size_t>(weights.size());
  if (k == 0 || means.size() != k || covariances.size() != k)
    throw UsageError("Gaussian mixture: weights, means and covariances must have equal length");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12)
    throw UsageError("Gaussian mixture: weights must lie on the simplex");
  const Eigen::Index d = means.front().size();
  BaseMeasure m;
  m.kind_ = BaseKind::GaussianMixture;
  m.mean_ = Eigen::VectorXd::Zero(d);
  m.scales_ = Eigen::VectorXd::Zero(d);
  m.log_norm_.resize(static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    if (means[c].size() != d || covariances[c].rows() != d || covariances[c].cols() != d)
      throw UsageError("Gaussian mixture: inconsistent component dimension");
    Eigen::LLT<Eigen::MatrixXd> llt(covariances[c]);
    if (llt.info() != Eigen::Success)
      throw UsageError("Gaussian mixture: covariance " + std::to_string(c) +
                       " is not positive definite");
    Eigen::MatrixXd l = llt.matrixL();
    m.log_norm_(static_cast<Eigen::Index>(c)) =
        -0.5 * d * kLog2Pi - l.diagonal().array().log().sum();
    m.chol_.push_back(std::move(l));
    m.mean_ += weights(static_cast<Eigen::Index>(c)) * means[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::VectorXd diff = means[c] - m.mean_;
    m.scales_ += weights(static_cast<Eigen::Index>(c)) *
                 (covariances[c].diagonal() + diff.cwiseAbs2());
  }
  m.scales_ = m.scales_.cwiseSqrt();
  m.weights_ = std::move(weights);
  m.means_ = std::move(means);
  m.covariances_ = std::move(covariances);
  return m;
}

double BaseMeasure::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim())
    throw std::invalid_argument("base measure: point has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(dim()));
  if (kind_ != BaseKind::GaussianMixture) {
    const Eigen::ArrayXd z = (x - mean_).array() / scales_.array();
    return -0.5 * z.square().sum() - scales_.array().log().sum() -
           0.5 * static_cast<double>(dim()) * kLog2Pi;
  }
  Eigen::VectorXd terms(weights_.size());
  for (Eigen::Index c = 0; c < weights_.size(); ++c) {
    const auto cs = static_cast<std::size_t>(c);
    const Eigen::VectorXd r =
        chol_[cs].triangularView<Eigen::Lower>().solve(x - means_[cs]);
    terms(c) = (weights_(c) > 0.0 ? std::log(weights_(c))
                                  : -std::numeric_limits<double>::infinity()) +
               log_norm_(c) - 0.5 * r.squaredNorm();
  }
  return logsumexp(terms);
}

Eigen::VectorXd BaseMeasure::log_density_rows(const Eigen::MatrixXd& points) const {
  if (points.cols() != dim())
    throw std::invalid_argument("base measure: points have dimension " +
                                std::to_string(points.cols()) + ", expected " +
                                std::to_string(dim()));
  Eigen::VectorXd out(points.rows());
  if (kind_ != BaseKind::GaussianMixture) {
    const double norm = -scales_.array().log().sum() - 0.5 * static_cast<double>(dim()) * kLog2Pi;
    const Eigen::ArrayXd inv = scales_.array().inverse();
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const Eigen::ArrayXd z = (points.row(i).transpose() - mean_).array() * inv;
      out(i) = norm - 0.5 * z.square().sum();
    }
    return out;
  }
  for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = log_density(points.row(i).transpose());
  return out;
}

Eigen::MatrixXd BaseMeasure::map_standard(const Eigen::MatrixXd& z, const Eigen::VectorXd& u) const {
  if (z.cols() != dim()) throw std::invalid_argument("map_standard: dimension mismatch");
  if (kind_ != BaseKind::GaussianMixture)
    return (z * scales_.asDiagonal()).rowwise() + mean_.transpose();
  if (u.size() != z.rows()) throw std::invalid_argument("map_standard: need one uniform per row");
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    std::size_t c = 0;
    double acc = weights_(0);
    while (u(i) > acc && c + 1 < means_.size()) acc += weights_(static_cast<Eigen::Index>(++c));
    out.row(i) = (means_[c] + chol_[c] * z.row(i).transpose()).transpose();
  }
  return out;
}

Eigen::VectorXd BaseMeasure::sample(Rng& rng) const { return sample(1, rng).row(0).transpose(); }

Eigen::MatrixXd BaseMeasure::sample(Eigen::Index n, Rng& rng) const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd z(n, dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (kind_ == BaseKind::GaussianMixture) u(i) = uniform01(rng);
    for (Eigen::Index j = 0; j < dim(); ++j) z(i, j) = gpdense::standard_normal(rng);
  }
  return map_standard(z, u);
}

Eigen::VectorXd BaseMeasure::parameters() const {
  if (frozen()) return {};
  Eigen::VectorXd theta(2 * dim());
  theta << mean_, scales_.array().log().matrix();
  return theta;
}

BaseMeasure BaseMeasure::with_parameters(const Eigen::VectorXd& theta) const {
  if (frozen()) throw UsageError("Gaussian-mixture base measures are frozen");
  if (theta.size() != 2 * dim()) throw std::invalid_argument("base parameters: wrong length");
  return diagonal_gaussian(theta.head(dim()), theta.tail(dim()).array().exp().matrix());
}

// ---------------------------------------------------------------------------

namespace {

struct EmRun {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  std::vector<double> trace;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int regularized = 0;
};

// Per-point log N(x; mean, cov) for all rows; false if cov is not PD.
bool gaussian_log_pdf_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov, Eigen::Ref<Eigen::VectorXd> out) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd l = llt.matrixL();
  const double norm = -0.5 * static_cast<double>(x.cols()) * kLog2Pi -
                      l.diagonal().array().log().sum();
  const Eigen::MatrixXd centered = (x.rowwise() - mean.transpose()).transpose();
  const Eigen::MatrixXd r = l.triangularView<Eigen::Lower>().solve(centered);
  out = (norm - 0.5 * r.colwise().squaredNorm().array()).matrix().transpose();
  return true;
}

EmRun run_em(const Eigen::MatrixXd& x, int k, Rng& rng, const GmmOptions& opt, double floor) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  EmRun run;
  run.weights = Eigen::VectorXd::Constant(k, 1.0 / k);

  const Eigen::VectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  Eigen::MatrixXd data_cov = centered.transpose() * centered / static_cast<double>(n);
  data_cov.diagonal().array() += floor;

  // Distinct random data points as initial means.
  std::vector<Eigen::Index> picked;
  while (static_cast<int>(picked.size()) < k) {
    const auto idx = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(n)) % n;
    if (std::find(picked.begin(), picked.end(), idx) == picked.end() ||
        static_cast<Eigen::Index>(picked.size()) >= n)
      picked.push_back(idx);
  }
  for (int c = 0; c < k; ++c) {
    run.means.emplace_back(x.row(picked[static_cast<std::size_t>(c)]).transpose());
    run.covs.push_back(data_cov);
  }

  Eigen::MatrixXd log_resp(n, k);
  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    for (int c = 0; c < k; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      if (!gaussian_log_pdf_rows(x, run.means[cs], run.covs[cs], log_resp.col(c)))
        throw NumericalError("fit_gmm: component covariance lost positive definiteness");
      log_resp.col(c).array() += std::log(run.weights(c));
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lse = logsumexp(log_resp.row(i));
      log_resp.row(i).array() -= lse;
      ll += lse;
    }
    run.trace.push_back(ll);
    run.log_likelihood = ll;
    if (iter > 0 && ll - previous <= opt.tolerance * std::abs(ll)) break;
    previous = ll;

    const Eigen::MatrixXd resp = log_resp.array().exp();
    for (int c = 0; c < k; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      const double nk = resp.col(c).sum();
      if (nk < 1e-10) {
        // Collapsed component keeps its parameters with negligible weight.
        run.weights(c) = 1e-10;
        ++run.regularized;
        continue;
      }
      run.weights(c) = nk / static_cast<double>(n);
      run.means[cs] = x.transpose() * resp.col(c) / nk;
      const Eigen::MatrixXd xc = x.rowwise() - run.means[cs].transpose();
      Eigen::MatrixXd cov = xc.transpose() * resp.col(c).asDiagonal() * xc / nk;
      cov = 0.5 * (cov + cov.transpose());
      const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(
                                 cov, Eigen::EigenvaluesOnly)
                                 .eigenvalues()
                                 .minCoeff();
      if (min_eig < floor) {
        cov.diagonal().array() += floor - min_eig;
        ++run.regularized;
      }
      run.covs[cs] = cov;
    }
    run.weights /= run.weights.sum();
    (void)d;
  }
  return run;
}

}  // namespace

GmmFit fit_gmm(const Dataset& data, int components, int restarts, Rng& rng,
               const GmmOptions& options) {
  if (components < 1) throw UsageError("fit_gmm: need at least one component");
  if (data.size() <= components)
    throw UsageError("fit_gmm: need more points (" + std::to_string(data.size()) +
                     ") than components (" + std::to_string(components) + ")");
  if (restarts < 1) throw UsageError("fit_gmm: need at least one restart");
  const Eigen::MatrixXd& x = data.points();
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const double mean_var = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).mean();
  const double floor = options.covariance_floor * std::max(mean_var, 1e-300);

  EmRun best;
  int total_regularized = 0;
  for (int r = 0; r < restarts; ++r) {
    EmRun run = run_em(x, components, rng, options, floor);
    total_regularized += run.regularized;
    if (run.log_likelihood > best.log_likelihood) best = std::move(run);
  }
  GmmFit fit;
  fit.mixture = BaseMeasure::gaussian_mixture(best.weights, best.means, best.covs);
  fit.log_likelihood = best.log_likelihood;
  fit.iterations = static_cast<int>(best.trace.size());
  fit.trace = std::move(best.trace);
  fit.regularized = total_regularized;
  return fit;
}

}  // namespace gpdense
