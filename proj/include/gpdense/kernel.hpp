#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gpdense/errors.hpp"
#include "gpdense/random.hpp"

namespace gpdense {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Squared-exponential ARD kernel parameters, stored as logs.
template <typename Scalar>
struct BasicKernelParams {
  Scalar log_amplitude = Scalar(0);
  VectorX<Scalar> log_lengthscales;

  static BasicKernelParams natural(Scalar amplitude, const VectorX<Scalar>& lengthscales) {
    if (!(amplitude > Scalar(0)) || (lengthscales.array() <= Scalar(0)).any())
      throw UsageError("kernel parameters must be strictly positive");
    return {std::log(amplitude), lengthscales.array().log().matrix()};
  }
  /// Packs (log amplitude, log lengthscales).
  VectorX<Scalar> to_vector() const {
    VectorX<Scalar> v(1 + log_lengthscales.size());
    v << log_amplitude, log_lengthscales;
    return v;
  }
  static BasicKernelParams from_vector(const VectorX<Scalar>& v) {
    return {v(0), v.tail(v.size() - 1)};
  }

  Scalar amplitude() const { return std::exp(log_amplitude); }
  VectorX<Scalar> lengthscales() const { return log_lengthscales.array().exp().matrix(); }
  Eigen::Index dim() const { return log_lengthscales.size(); }
};

using KernelParams = BasicKernelParams<double>;

/// k(x, y) = amplitude * prod_i exp(-(x_i - y_i)^2 / (2 l_i^2)) for all row pairs.
template <typename DerivedX, typename DerivedY>
MatrixX<typename DerivedX::Scalar> kernel_matrix(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
    const BasicKernelParams<typename DerivedX::Scalar>& p) {
  using Scalar = typename DerivedX::Scalar;
  if (x.cols() != p.dim() || y.cols() != p.dim())
    throw std::invalid_argument("kernel_matrix: point dimension does not match lengthscales");
  const VectorX<Scalar> inv = (-p.log_lengthscales).array().exp().matrix();
  const MatrixX<Scalar> xs = x * inv.asDiagonal();
  const MatrixX<Scalar> ys = y * inv.asDiagonal();
  MatrixX<Scalar> k(x.rows(), y.rows());
  for (Eigen::Index j = 0; j < ys.rows(); ++j) {
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      Scalar sq = Scalar(0);
      for (Eigen::Index c = 0; c < xs.cols(); ++c) {
        const Scalar diff = xs(i, c) - ys(j, c);
        sq += diff * diff;
      }
      // Scalar exp underflows to exactly zero; the vectorised one can leave denormals.
      using std::exp;
      k(i, j) = exp(Scalar(-0.5) * sq + p.log_amplitude);
    }
  }
  return k;
}

/// Lower Cholesky factor of K + jitter * I.
template <typename Scalar>
class BasicCholeskyFactor {
 public:
  BasicCholeskyFactor() = default;
  BasicCholeskyFactor(Eigen::LLT<MatrixX<Scalar>> llt, Scalar jitter)
      : llt_(std::move(llt)), jitter_(jitter) {}

  MatrixX<Scalar> matrix_l() const { return llt_.matrixL(); }
  const Eigen::LLT<MatrixX<Scalar>>& matrix_llt() const { return llt_; }
  Scalar jitter() const { return jitter_; }
  Eigen::Index size() const { return llt_.rows(); }

  /// (K + jitter I)^{-1} b
  template <typename Derived>
  typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.solve(b);
  }
  /// L^{-1} b
  template <typename Derived>
  typename Derived::PlainObject solve_lower(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.matrixL().solve(b);
  }
  /// L b
  template <typename Derived>
  typename Derived::PlainObject multiply_lower(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.matrixL() * b;
  }
  Scalar log_determinant() const {
    return Scalar(2) * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  Eigen::LLT<MatrixX<Scalar>> llt_;
  Scalar jitter_ = Scalar(0);
};

using CholeskyFactor = BasicCholeskyFactor<double>;

/// Cholesky factorisation with the smallest jitter from
/// {0, 1e-8, 1e-6, 1e-4} * mean(diag K) that succeeds.
template <typename Derived>
BasicCholeskyFactor<typename Derived::Scalar> chol_jitter(const Eigen::MatrixBase<Derived>& k) {
  using Scalar = typename Derived::Scalar;
  if (k.rows() != k.cols()) throw std::invalid_argument("chol_jitter: matrix must be square");
  const Eigen::Index n = k.rows();
  if (n == 0) return {Eigen::LLT<MatrixX<Scalar>>(MatrixX<Scalar>(0, 0)), Scalar(0)};
  const Scalar scale = k.diagonal().mean();
  static constexpr std::array<double, 4> kLadder{0.0, 1e-8, 1e-6, 1e-4};
  MatrixX<Scalar> work;
  for (const double rung : kLadder) {
    const Scalar jitter = Scalar(rung) * std::abs(scale);
    work = k;
    work.diagonal().array() += jitter;
    Eigen::LLT<MatrixX<Scalar>> llt(work);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite() &&
        (llt.matrixLLT().diagonal().array() > Scalar(0)).all())
      return {std::move(llt), jitter};
  }
  std::ostringstream msg;
  msg << "chol_jitter: factorisation failed at maximum jitter (n=" << n
      << ", min diag=" << k.diagonal().minCoeff() << ", max diag=" << k.diagonal().maxCoeff()
      << ", max asymmetry=" << (k - k.transpose()).cwiseAbs().maxCoeff() << ")";
  throw NumericalError(msg.str());
}

template <typename Scalar>
struct GaussianMoments {
  VectorX<Scalar> mean;
  MatrixX<Scalar> cov;
};

/// GP conditional of g at `xb` given values `g_known` at `xa`.
template <typename DerivedG, typename DerivedA, typename DerivedB>
GaussianMoments<typename DerivedA::Scalar> conditional_prior(
    const Eigen::MatrixBase<DerivedG>& g_known, const Eigen::MatrixBase<DerivedA>& xa,
    const Eigen::MatrixBase<DerivedB>& xb, const BasicKernelParams<typename DerivedA::Scalar>& p,
    typename DerivedA::Scalar mu0) {
  using Scalar = typename DerivedA::Scalar;
  if (xa.rows() == 0) throw std::invalid_argument("conditional_prior: empty conditioning set");
  if (g_known.size() != xa.rows())
    throw std::invalid_argument("conditional_prior: one value per conditioning point required");
  const auto chol = chol_jitter(kernel_matrix(xa, xa, p));
  const MatrixX<Scalar> kab = kernel_matrix(xa, xb, p);
  const MatrixX<Scalar> v = chol.solve_lower(kab);
  const VectorX<Scalar> w = chol.solve_lower((g_known.array() - mu0).matrix());
  GaussianMoments<Scalar> out;
  out.mean = (v.transpose() * w).array() + mu0;
  out.cov = kernel_matrix(xb, xb, p) - v.transpose() * v;
  out.cov = Scalar(0.5) * (out.cov + out.cov.transpose());
  return out;
}

/// Joint draw from N(mean, cov) using chol_jitter.
template <typename Scalar>
VectorX<Scalar> draw_gaussian(const GaussianMoments<Scalar>& m, Rng& rng) {
  if (m.mean.size() == 0) return m.mean;
  const auto chol = chol_jitter(m.cov);
  return m.mean + chol.multiply_lower(standard_normal_vector(m.mean.size(), rng));
}

/// Reusable sampler for g at a fixed query set given values at a fixed
/// conditioning set: g_b = mu0 + V^T L^{-1} (g_a - mu0) + F xi, where
/// L L^T = K_aa, V = L^{-1} K_ab and F F^T is a pivoted partial Cholesky factor
/// of the conditional covariance, truncated once every residual variance
/// drops below `tolerance * amplitude`.
template <typename Scalar>
struct BasicConditionalSampler {
  BasicCholeskyFactor<Scalar> chol;  // of K_aa
  MatrixX<Scalar> projection;        // V, |a| x |b|
  MatrixX<Scalar> residual_factor;   // |b| x rank
  Scalar max_residual_variance = Scalar(0);

  VectorX<Scalar> mean(const VectorX<Scalar>& g_known, Scalar mu0) const {
    if (projection.rows() == 0) return VectorX<Scalar>::Constant(projection.cols(), mu0);
    const VectorX<Scalar> w = chol.solve_lower((g_known.array() - mu0).matrix());
    return (projection.transpose() * w).array() + mu0;
  }
  VectorX<Scalar> draw(const VectorX<Scalar>& g_known, Scalar mu0, Rng& rng) const {
    VectorX<Scalar> g = mean(g_known, mu0);
    if (residual_factor.cols() > 0)
      g.noalias() += residual_factor * standard_normal_vector(residual_factor.cols(), rng);
    return g;
  }
};

using ConditionalSampler = BasicConditionalSampler<double>;

template <typename DerivedA, typename DerivedB>
BasicConditionalSampler<typename DerivedA::Scalar> make_conditional_sampler(
    const Eigen::MatrixBase<DerivedA>& xa, const Eigen::MatrixBase<DerivedB>& xb,
    const BasicKernelParams<typename DerivedA::Scalar>& p, double tolerance = 1e-8) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index nb = xb.rows();
  BasicConditionalSampler<Scalar> s;
  if (xa.rows() > 0) {
    s.chol = chol_jitter(kernel_matrix(xa, xa, p));
    s.projection = kernel_matrix(xa, xb, p);
    s.chol.matrix_llt().matrixL().solveInPlace(s.projection);
  } else {
    s.projection.resize(0, nb);
  }

  const Scalar amp = p.amplitude();
  const Scalar tol = Scalar(tolerance) * amp;
  VectorX<Scalar> resid = (amp - s.projection.colwise().squaredNorm().array()).matrix().transpose();
  const VectorX<Scalar> inv = (-p.log_lengthscales).array().exp().matrix();
  const MatrixX<Scalar> xs = xb * inv.asDiagonal();
  MatrixX<Scalar> f(nb, std::min<Eigen::Index>(nb, 64));
  Eigen::Index rank = 0;
  VectorX<Scalar> col(nb);
  while (rank < nb) {
    Eigen::Index j = 0;
    const Scalar top = resid.maxCoeff(&j);
    if (top <= tol) break;
    // Column j of the residual covariance.
    for (Eigen::Index i = 0; i < nb; ++i)
      col(i) = amp * std::exp(Scalar(-0.5) * (xs.row(i) - xs.row(j)).squaredNorm());
    if (s.projection.rows() > 0) col.noalias() -= s.projection.transpose() * s.projection.col(j);
    if (rank > 0) col.noalias() -= f.leftCols(rank) * f.row(j).head(rank).transpose();
    col /= std::sqrt(top);
    col(j) = std::sqrt(top);
    if (rank == f.cols()) f.conservativeResize(nb, std::min<Eigen::Index>(nb, 2 * f.cols()));
    f.col(rank) = col;
    resid -= col.cwiseAbs2();
    resid(j) = Scalar(0);
    ++rank;
  }
  s.residual_factor = f.leftCols(rank);
  s.max_residual_variance = nb > 0 ? std::max(Scalar(0), resid.maxCoeff()) : Scalar(0);
  return s;
}

template <typename Scalar>
struct PredictiveMoments {
  VectorX<Scalar> mean;
  VectorX<Scalar> variance;
  /// sqrt(mean^2 + variance), the tilt of the PG factors.
  VectorX<Scalar> c;
};

/// Moments of q(g(x)) = integral p(g(x) | g_s) N(g_s; mu_s, sigma_s) at rows of `xq`.
template <typename DerivedI, typename DerivedQ>
PredictiveMoments<typename DerivedI::Scalar> sparse_predictive_moments(
    const Eigen::MatrixBase<DerivedI>& inducing,
    const BasicCholeskyFactor<typename DerivedI::Scalar>& inducing_chol,
    const VectorX<typename DerivedI::Scalar>& mu_s, const MatrixX<typename DerivedI::Scalar>& sigma_s,
    const Eigen::MatrixBase<DerivedQ>& xq, const BasicKernelParams<typename DerivedI::Scalar>& p,
    typename DerivedI::Scalar mu0) {
  using Scalar = typename DerivedI::Scalar;
  const MatrixX<Scalar> ksq = kernel_matrix(inducing, xq, p);
  const MatrixX<Scalar> v = inducing_chol.solve_lower(ksq);  // L^{-1} k_s
  const MatrixX<Scalar> kt = inducing_chol.matrix_l().transpose().template triangularView<Eigen::Upper>().solve(v);
  const VectorX<Scalar> centered = (mu_s.array() - mu0).matrix();
  PredictiveMoments<Scalar> out;
  out.mean = (kt.transpose() * centered).array() + mu0;
  const MatrixX<Scalar> sk = sigma_s * kt;
  out.variance = (p.amplitude() - v.colwise().squaredNorm().array() +
                  kt.cwiseProduct(sk).colwise().sum().array())
                     .matrix()
                     .transpose();
  out.c = (out.mean.array().square() + out.variance.array()).max(Scalar(0)).sqrt().matrix();
  return out;
}

/// Convenience overload that factorises K_s itself.
template <typename DerivedI, typename DerivedQ>
PredictiveMoments<typename DerivedI::Scalar> sparse_predictive_moments(
    const Eigen::MatrixBase<DerivedI>& inducing, const VectorX<typename DerivedI::Scalar>& mu_s,
    const MatrixX<typename DerivedI::Scalar>& sigma_s, const Eigen::MatrixBase<DerivedQ>& xq,
    const BasicKernelParams<typename DerivedI::Scalar>& p, typename DerivedI::Scalar mu0) {
  return sparse_predictive_moments(inducing, chol_jitter(kernel_matrix(inducing, inducing, p)),
                                   mu_s, sigma_s, xq, p, mu0);
}

}  // namespace gpdense
