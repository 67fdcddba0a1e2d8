#include "gpdense/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <sstream>

#include "gpdense/errors.hpp"
#include "gpdense/special.hpp"

namespace gpdense {

double DensityEstimate::max_relative_error() const {
  if (normalizer.size() == 0) return 0.0;
  return (normalizer_se.array() / normalizer.array()).maxCoeff();
}

Eigen::MatrixXd DensityEstimate::log_density() const {
  Eigen::MatrixXd out = log_unnormalized;
  out.colwise() -= normalizer.array().log().matrix();
  out.array() += log_jacobian;
  return out;
}

Eigen::VectorXd DensityEstimate::mean_density() const {
  if (samples() == 0) throw UsageError("density estimate has no samples");
  return log_density().array().exp().colwise().mean().transpose();
}

DensityEstimate density_from_function_samples(const Eigen::MatrixXd& eval_points,
                                              const Eigen::VectorXd& log_pi_eval,
                                              const Eigen::MatrixXd& g_eval,
                                              const Eigen::MatrixXd& g_norm) {
  if (g_eval.cols() != eval_points.rows() || log_pi_eval.size() != eval_points.rows() ||
      g_eval.rows() != g_norm.rows())
    throw std::invalid_argument("density_from_function_samples: shape mismatch");
  if (g_norm.cols() < 1) throw UsageError("density: need at least one normalizer point");
  DensityEstimate est;
  est.eval_points = eval_points;
  const Eigen::Index s = g_eval.rows();
  est.log_unnormalized = g_eval.unaryExpr([](double g) { return log_sigmoid(g); });
  est.log_unnormalized.rowwise() += log_pi_eval.transpose();
  const Eigen::MatrixXd sig = g_norm.unaryExpr([](double g) { return sigmoid(g); });
  const double r = static_cast<double>(g_norm.cols());
  est.normalizer = sig.rowwise().mean();
  est.normalizer_se.resize(s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const double var =
        r > 1 ? (sig.row(i).array() - est.normalizer(i)).square().sum() / (r - 1.0) : 0.0;
    est.normalizer_se(i) = std::sqrt(var / r);
  }
  return est;
}

DensityEstimate density_from_function_samples(const Eigen::MatrixXd& eval_points,
                                              const Eigen::VectorXd& log_pi_eval,
                                              const Eigen::MatrixXd& g_eval,
                                              const Eigen::MatrixXd& g_norm,
                                              const Eigen::MatrixXd& log_weights) {
  if (log_weights.rows() != g_norm.rows() || log_weights.cols() != g_norm.cols())
    throw std::invalid_argument("density_from_function_samples: weight shape mismatch");
  // Importance estimate with the weights as control variate: w = pi / q has mean 1, so
  // Z = mean(w sigma) - c (mean(w) - 1) with the regression coefficient c. Constant sigma is exact.
  const Eigen::MatrixXd w = log_weights.array().exp().matrix();
  const Eigen::MatrixXd a = g_norm.unaryExpr([](double g) { return sigmoid(g); }).cwiseProduct(w);
  DensityEstimate est = density_from_function_samples(eval_points, log_pi_eval, g_eval, g_norm);
  const double r = static_cast<double>(g_norm.cols());
  for (Eigen::Index i = 0; i < g_norm.rows(); ++i) {
    const Eigen::ArrayXd ai = a.row(i).array(), wi = w.row(i).array();
    const Eigen::ArrayXd da = ai - ai.mean(), dw = wi - wi.mean();
    const double sww = dw.square().sum();
    const double c = sww > 0.0 ? (da * dw).sum() / sww : 0.0;
    est.normalizer(i) = ai.mean() - c * (wi.mean() - 1.0);
    const double dof = r - (sww > 0.0 ? 2.0 : 1.0);
    // Too few points to estimate the error: report it as unbounded so the guard flags it.
    est.normalizer_se(i) = dof > 0.0 ? std::sqrt((da - c * dw).square().sum() / dof / r)
                                     : std::numeric_limits<double>::infinity();
  }
  if ((est.normalizer.array() <= 0.0).any())
    throw NumericalError("density: importance-sampled normalizer is not positive");
  return est;
}

NormalizerProposal NormalizerProposal::around(const Eigen::MatrixXd& points) {
  if (points.rows() < 1) throw UsageError("normalizer proposal: no points");
  const auto n = static_cast<double>(points.rows());
  const auto d = static_cast<double>(points.cols());
  const Eigen::RowVectorXd mean = points.colwise().mean();
  const double spread =
      n > 1 ? std::sqrt((points.rowwise() - mean).array().square().sum() / ((n - 1.0) * d)) : 1.0;
  NormalizerProposal p;
  p.centers = points;
  p.bandwidth = (spread > 0.0 ? spread : 1.0) * std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) *
                std::pow(n, -1.0 / (d + 4.0));
  return p;
}

Eigen::VectorXd NormalizerProposal::log_density_rows(const BaseMeasure& base,
                                                     const Eigen::MatrixXd& x) const {
  const Eigen::VectorXd log_pi = base.log_density_rows(x);
  if (from_base_only()) return log_pi;
  const auto d = static_cast<double>(x.cols());
  const double h2 = bandwidth * bandwidth;
  const double log_norm =
      -0.5 * d * std::log(2.0 * std::numbers::pi * h2) - std::log(static_cast<double>(centers.rows()));
  Eigen::VectorXd out(x.rows());
  Eigen::VectorXd terms(centers.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < centers.rows(); ++j)
      terms(j) = -0.5 * (x.row(i) - centers.row(j)).squaredNorm() / h2;
    const double log_kernels = logsumexp(terms) + log_norm;
    const Eigen::Vector2d parts(std::log(base_weight) + log_pi(i),
                                std::log1p(-base_weight) + log_kernels);
    out(i) = base_weight >= 1.0 ? log_pi(i) : logsumexp(parts);
  }
  return out;
}

namespace {

Eigen::VectorXd uniform_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd u(n);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = uniform01(rng);
  return u;
}

/// Standard draws shared by every posterior sample of one evaluation.
struct CommonDraws {
  Eigen::MatrixXd z;
  Eigen::VectorXd u;
  std::vector<Eigen::Index> center;  // -1: base-measure draw
};

CommonDraws common_draws(Eigen::Index r, Eigen::Index d, const NormalizerProposal& proposal,
                         Rng& rng) {
  CommonDraws c{standard_normal_matrix(r, d, rng), uniform_vector(r, rng),
                std::vector<Eigen::Index>(static_cast<std::size_t>(r), -1)};
  if (proposal.from_base_only()) return c;
  if (!(proposal.bandwidth > 0.0) || !(proposal.base_weight > 0.0 && proposal.base_weight <= 1.0))
    throw UsageError("normalizer proposal: bandwidth must be positive and base weight in (0, 1]");
  const auto m = static_cast<double>(proposal.centers.rows());
  for (auto& k : c.center) {
    const double pick = uniform01(rng);
    if (pick >= proposal.base_weight)
      k = std::min(proposal.centers.rows() - 1, static_cast<Eigen::Index>(uniform01(rng) * m));
  }
  return c;
}

/// Normalizer points for one base measure and their log importance weights log pi - log q.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> normalizer_points(const BaseMeasure& base,
                                                              const NormalizerProposal& proposal,
                                                              const CommonDraws& c) {
  Eigen::MatrixXd x = base.map_standard(c.z, c.u);
  if (proposal.from_base_only()) return {std::move(x), Eigen::VectorXd::Zero(x.rows())};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index k = c.center[static_cast<std::size_t>(i)];
    if (k >= 0) x.row(i) = proposal.centers.row(k) + proposal.bandwidth * c.z.row(i);
  }
  Eigen::VectorXd log_w = base.log_density_rows(x) - proposal.log_density_rows(base, x);
  return {std::move(x), std::move(log_w)};
}

}  // namespace

DensityEstimate posterior_density_samples(const GibbsChain& chain, const Dataset& train,
                                          const Eigen::MatrixXd& eval_points,
                                          const DensityOptions& options, Rng& rng) {
  const auto stored = static_cast<Eigen::Index>(chain.samples.size());
  if (stored == 0) throw UsageError("density: the chain holds no samples");
  if (options.normalizer_points < 1) throw UsageError("density: normalizer_points must be >= 1");
  const Eigen::Index s = options.samples <= 0 ? stored : std::min<Eigen::Index>(options.samples, stored);
  const Eigen::Index q = eval_points.rows();
  const Eigen::Index r = options.normalizer_points;
  const Eigen::Index d = eval_points.cols();

  // Common random numbers for the normalizer points across samples.
  const CommonDraws common = common_draws(r, d, options.proposal, rng);

  Eigen::MatrixXd g_eval(s, q), g_norm(s, r), log_w(s, r);
  Eigen::MatrixXd log_unnorm(s, q);
  for (Eigen::Index i = 0; i < s; ++i) {
    // Evenly spaced over the stored snapshots.
    const Eigen::Index idx = s == 1 ? stored - 1 : (i * (stored - 1)) / (s - 1);
    const GibbsState& st = chain.samples[static_cast<std::size_t>(idx)];
    auto [norm_points, weights] = normalizer_points(st.base, options.proposal, common);
    log_w.row(i) = weights.transpose();
    Eigen::MatrixXd query(q + r, d);
    query << eval_points, norm_points;
    const auto sampler =
        make_conditional_sampler(st.conditioning_points(train), query, st.kernel,
                                 options.residual_tolerance);
    const Eigen::VectorXd g = sampler.draw(st.g_values, st.mu0, rng);
    g_eval.row(i) = g.head(q).transpose();
    g_norm.row(i) = g.tail(r).transpose();
    log_unnorm.row(i) = st.base.log_density_rows(eval_points).transpose();
  }
  DensityEstimate est =
      options.proposal.from_base_only()
          ? density_from_function_samples(eval_points, Eigen::VectorXd::Zero(q), g_eval, g_norm)
          : density_from_function_samples(eval_points, Eigen::VectorXd::Zero(q), g_eval, g_norm,
                                          log_w);
  est.log_unnormalized += log_unnorm;
  return est;
}

DensityEstimate posterior_density_samples(const SparseVBState& state,
                                          const Eigen::MatrixXd& eval_points,
                                          const DensityOptions& options, Rng& rng) {
  if (options.samples < 1) throw UsageError("density: VB evaluation needs samples >= 1");
  if (options.normalizer_points < 1) throw UsageError("density: normalizer_points must be >= 1");
  const Eigen::Index s = options.samples;
  const Eigen::Index q = eval_points.rows();
  const Eigen::Index r = options.normalizer_points;
  const Eigen::Index d = eval_points.cols();
  const CommonDraws common = common_draws(r, d, options.proposal, rng);
  const auto [norm_points, weights] = normalizer_points(state.base, options.proposal, common);
  Eigen::MatrixXd query(q + r, d);
  query << eval_points, norm_points;
  const auto sampler =
      make_conditional_sampler(state.inducing, query, state.kernel, options.residual_tolerance);

  Eigen::MatrixXd g_eval(s, q), g_norm(s, r);
  for (Eigen::Index i = 0; i < s; ++i) {
    const Eigen::VectorXd gs =
        state.mu + state.sigma_factor * standard_normal_vector(state.sigma_factor.cols(), rng);
    const Eigen::VectorXd g = sampler.draw(gs, state.mu0, rng);
    g_eval.row(i) = g.head(q).transpose();
    g_norm.row(i) = g.tail(r).transpose();
  }
  const Eigen::VectorXd log_pi = state.base.log_density_rows(eval_points);
  if (options.proposal.from_base_only())
    return density_from_function_samples(eval_points, log_pi, g_eval, g_norm);
  return density_from_function_samples(eval_points, log_pi, g_eval, g_norm,
                                       weights.transpose().replicate(s, 1));
}

Eigen::VectorXd per_sample_log_likelihood(const DensityEstimate& est) {
  return est.log_density().rowwise().sum();
}

double log_expected_test_likelihood(const DensityEstimate& est, double relative_limit) {
  if (est.samples() == 0) throw UsageError("log_expected_test_likelihood: no posterior samples");
  if (est.eval_points.rows() == 0) throw UsageError("log_expected_test_likelihood: no test points");
  const double worst = est.max_relative_error();
  if (worst >= relative_limit) {
    std::ostringstream msg;
    msg << "normalizer Monte-Carlo error too large: max std(Z)/Z = " << worst << " (limit "
        << relative_limit << "); increase the number of normalizer points";
    throw FlaggedResultError(msg.str());
  }
  const Eigen::VectorXd per = per_sample_log_likelihood(est);
  return logsumexp(per) - std::log(static_cast<double>(per.size()));
}

}  // namespace gpdense
