#include "gpdense/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "gpdense/errors.hpp"
#include "gpdense/special.hpp"

namespace gpdense {
namespace {

constexpr Eigen::Index kMaxProposals = 1'000'000;
constexpr Eigen::Index kMaxRevealed = 20'000;
constexpr double kNugget = 1e-8;

}  // namespace

LazyGP::LazyGP(KernelParams params, double mu0)
    : params_(std::move(params)), mu0_(mu0), nugget_(kNugget * params_.amplitude()) {}

LazyGP LazyGP::conditioned(KernelParams params, double mu0, const Eigen::MatrixXd& locations,
                           const Eigen::VectorXd& values) {
  if (locations.rows() != values.size())
    throw std::invalid_argument("LazyGP::conditioned: one value per location required");
  LazyGP gp(std::move(params), mu0);
  const Eigen::Index n = locations.rows();
  if (n == 0) return gp;
  Eigen::MatrixXd k = kernel_matrix(locations, locations, gp.params_);
  k.diagonal().array() += gp.nugget_;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  Eigen::MatrixXd l;
  if (llt.info() == Eigen::Success) {
    l = llt.matrixL();
  } else {
    const auto chol = chol_jitter(k);
    gp.nugget_ += chol.jitter();
    l = chol.matrix_l();
  }
  const Eigen::Index cap = std::max<Eigen::Index>(2 * n, 64);
  gp.x_.resize(cap, locations.cols());
  gp.g_.resize(cap);
  gp.l_ = Eigen::MatrixXd::Zero(cap, cap);
  gp.w_.resize(cap);
  gp.x_.topRows(n) = locations;
  gp.g_.head(n) = values;
  gp.l_.topLeftCorner(n, n) = l;
  gp.w_.head(n) = l.triangularView<Eigen::Lower>().solve((values.array() - mu0).matrix());
  gp.n_ = n;
  return gp;
}

void LazyGP::append(const Eigen::Ref<const Eigen::VectorXd>& x, double g,
                    const Eigen::VectorXd& row, double pivot) {
  if (n_ >= kMaxRevealed)
    throw NumericalError("LazyGP: revealed more than " + std::to_string(kMaxRevealed) +
                         " locations; acceptance stalled, consider increasing mu0");
  if (n_ == x_.rows()) {
    const Eigen::Index cap = std::max<Eigen::Index>(64, 2 * n_);
    Eigen::MatrixXd grown(cap, x.size());
    Eigen::VectorXd gv(cap), w(cap);
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(cap, cap);
    grown.topRows(n_) = x_.topRows(n_);
    gv.head(n_) = g_.head(n_);
    w.head(n_) = w_.head(n_);
    l.topLeftCorner(n_, n_) = l_.topLeftCorner(n_, n_);
    x_.swap(grown);
    g_.swap(gv);
    w_.swap(w);
    l_.swap(l);
  }
  x_.row(n_) = x.transpose();
  g_(n_) = g;
  l_.row(n_).head(n_) = row.transpose();
  l_(n_, n_) = pivot;
  w_(n_) = (g - mu0_ - row.dot(w_.head(n_))) / pivot;
  ++n_;
}

double LazyGP::eval(const Eigen::Ref<const Eigen::VectorXd>& x, Rng& rng) {
  if (x.size() != params_.dim()) throw std::invalid_argument("LazyGP::eval: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("LazyGP::eval: non-finite location");
  for (Eigen::Index i = 0; i < n_; ++i)
    if (x_.row(i).transpose() == x) return g_(i);

  const Eigen::MatrixXd xq = x.transpose();
  Eigen::VectorXd v(n_);
  if (n_ > 0) {
    const Eigen::VectorXd k = kernel_matrix(x_.topRows(n_), xq, params_).col(0);
    v = l_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solve(k);
  }
  const double mean = mu0_ + v.dot(w_.head(n_));
  const double var = std::max(params_.amplitude() + nugget_ - v.squaredNorm(), nugget_);
  const double pivot = std::sqrt(var);
  const double g = mean + pivot * standard_normal(rng);
  append(x, g, v, pivot);
  return g;
}

GeneratedData draw_from_path(LazyGP& gp, const BaseMeasure& base, Eigen::Index n, Rng& rng) {
  if (n < 1) throw UsageError("generate: need N >= 1 points");
  if (base.dim() != gp.params().dim())
    throw UsageError("generate: base measure and kernel dimensions differ");
  const Eigen::Index d = base.dim();
  std::vector<Eigen::VectorXd> accepted, rejected;
  std::vector<double> accepted_g, rejected_g;
  GeneratedData out;
  double clock = 0.0;
  while (static_cast<Eigen::Index>(accepted.size()) < n) {
    if (out.proposals >= kMaxProposals)
      throw NumericalError("generate: acceptance stalled after " + std::to_string(kMaxProposals) +
                           " proposals; consider increasing mu0");
    ++out.proposals;
    clock += standard_exponential(rng);
    const Eigen::VectorXd x = base.sample(rng);
    const double g = gp.eval(x, rng);
    if (uniform01(rng) < sigmoid(g)) {
      accepted.push_back(x);
      accepted_g.push_back(g);
      out.arrival_time = clock;
    } else {
      rejected.push_back(x);
      rejected_g.push_back(g);
    }
  }
  Eigen::MatrixXd pts(n, d);
  out.data_g.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pts.row(i) = accepted[static_cast<std::size_t>(i)].transpose();
    out.data_g(i) = accepted_g[static_cast<std::size_t>(i)];
  }
  out.data = Dataset(std::move(pts));
  const auto m = static_cast<Eigen::Index>(rejected.size());
  out.rejected.resize(m, d);
  out.rejected_g.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.rejected.row(i) = rejected[static_cast<std::size_t>(i)].transpose();
    out.rejected_g(i) = rejected_g[static_cast<std::size_t>(i)];
  }
  return out;
}

GeneratedModel generate_dataset(const KernelParams& kernel, double mu0, const BaseMeasure& base,
                                Eigen::Index n, Rng& rng) {
  LazyGP gp(kernel, mu0);
  GeneratedData sample = draw_from_path(gp, base, n, rng);
  return {std::move(sample), std::move(gp)};
}

Eigen::MatrixXd circle_points(Eigen::Index n, double radius, double noise, Rng& rng) {
  Eigen::MatrixXd out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * uniform01(rng);
    out(i, 0) = radius * std::cos(angle) + noise * standard_normal(rng);
    out(i, 1) = radius * std::sin(angle) + noise * standard_normal(rng);
  }
  return out;
}

}  // namespace gpdense
