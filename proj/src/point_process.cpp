#include "gpdense/point_process.hpp"

#include <stdexcept>
#include <vector>

#include "gpdense/pg.hpp"
#include "gpdense/special.hpp"

namespace gpdense {

MarkedEventSet sample_prior_process(double lambda, const BaseMeasure& base, Rng& rng) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("sample_prior_process: lambda must be >= 0");
  const long m = poisson_draw(lambda, rng);
  MarkedEventSet out;
  out.locations = base.sample(m, rng);
  out.marks.resize(m);
  for (long i = 0; i < m; ++i) out.marks(i) = sample_pg1(0.0, rng);
  return out;
}

ThinnedProcess sample_conditional_process(const FunctionSampler& g, double lambda,
                                          const BaseMeasure& base, Rng& rng) {
  if (!(lambda >= 0.0))
    throw std::invalid_argument("sample_conditional_process: lambda must be >= 0");
  const long m_max = poisson_draw(lambda, rng);
  const Eigen::MatrixXd candidates = base.sample(m_max, rng);
  ThinnedProcess out;
  out.candidates = m_max;
  if (m_max == 0) {
    out.events = MarkedEventSet::empty(base.dim());
    return out;
  }
  const Eigen::VectorXd g_c = g(candidates, rng);

  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < m_max; ++i)
    if (uniform01(rng) < sigmoid(-g_c(i))) kept.push_back(i);

  const auto m = static_cast<Eigen::Index>(kept.size());
  out.events.locations.resize(m, base.dim());
  out.events.marks.resize(m);
  out.g_values.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = kept[static_cast<std::size_t>(k)];
    out.events.locations.row(k) = candidates.row(i);
    out.g_values(k) = g_c(i);
    out.events.marks(k) = sample_pg1(g_c(i), rng);
  }
  return out;
}

}  // namespace gpdense
