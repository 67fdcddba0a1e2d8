#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gpdense/random.hpp"

namespace gpdense {

/// Affine whitening map y = transform * (x - mean).
struct Whitening {
  Eigen::VectorXd mean;
  Eigen::MatrixXd transform;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& points) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& whitened) const;
  /// log |det transform|, the Jacobian term for densities in whitened space.
  double log_abs_det() const;
};

/// N points in R^d stored one per row.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Eigen::MatrixXd points, std::optional<Whitening> whitening = std::nullopt);

  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  const std::optional<Whitening>& whitening() const { return whitening_; }

 private:
  Eigen::MatrixXd points_;
  std::optional<Whitening> whitening_;
};

/// Zero-mean, identity-sample-covariance copy of `data` (sample covariance
/// uses N - 1). Throws NumericalError naming the first collinear dimension.
Dataset whiten(const Dataset& data);

enum class BaseKind { StandardNormal, DiagonalGaussian, GaussianMixture };

/// The base probability measure pi(x) tilted by sigma(g(x)).
///
/// Gaussian kinds expose theta_pi = (mean, log scales); mixtures are frozen.
class BaseMeasure {
 public:
  static BaseMeasure standard_normal(Eigen::Index dim);
  static BaseMeasure diagonal_gaussian(Eigen::VectorXd mean, Eigen::VectorXd scales);
  static BaseMeasure gaussian_mixture(Eigen::VectorXd weights, std::vector<Eigen::VectorXd> means,
                                      std::vector<Eigen::MatrixXd> covariances);

  BaseKind kind() const { return kind_; }
  Eigen::Index dim() const { return mean_.size(); }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// log pi at every row of `points`.
  Eigen::VectorXd log_density_rows(const Eigen::MatrixXd& points) const;

  Eigen::VectorXd sample(Rng& rng) const;
  Eigen::MatrixXd sample(Eigen::Index n, Rng& rng) const;

  /// Deterministic map from standard draws to draws from pi: row i of `z` is
  /// N(0, I_d), `u(i)` is U(0,1) and picks the mixture component.
  Eigen::MatrixXd map_standard(const Eigen::MatrixXd& z, const Eigen::VectorXd& u) const;

  bool frozen() const { return kind_ == BaseKind::GaussianMixture; }
  /// (mean, log scales); empty for mixtures.
  Eigen::VectorXd parameters() const;
  /// Diagonal Gaussian with the given (mean, log scales).
  BaseMeasure with_parameters(const Eigen::VectorXd& theta) const;

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& scales() const { return scales_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covariances_; }

 private:
  BaseMeasure() = default;

  BaseKind kind_ = BaseKind::StandardNormal;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scales_;
  Eigen::VectorXd weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covariances_;
  std::vector<Eigen::MatrixXd> chol_;
  Eigen::VectorXd log_norm_;
};

struct GmmOptions {
  int max_iterations = 500;
  double tolerance = 1e-10;
  /// Eigenvalue floor as a fraction of the mean per-dimension data variance.
  double covariance_floor = 1e-6;
};

struct GmmFit {
  BaseMeasure mixture = BaseMeasure::standard_normal(1);
  double log_likelihood = 0.0;
  /// Log likelihood of the winning restart at each EM iteration.
  std::vector<double> trace;
  /// Number of component updates that hit the covariance floor or collapsed.
  int regularized = 0;
  int iterations = 0;
};

/// EM fit of a full-covariance Gaussian mixture; best of `restarts` runs.
GmmFit fit_gmm(const Dataset& data, int components, int restarts, Rng& rng,
               const GmmOptions& options = {});

}  // namespace gpdense
