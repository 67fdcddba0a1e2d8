#include "gpdense/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "gpdense/errors.hpp"

namespace gpdense {

Eigen::VectorXd autocorrelation(const Eigen::VectorXd& series, Eigen::Index max_lag) {
  const Eigen::Index n = series.size();
  if (max_lag < 0 || n <= max_lag)
    throw UsageError("autocorrelation: series length must exceed max_lag");
  const Eigen::VectorXd c = (series.array() - series.mean()).matrix();
  const double c0 = c.squaredNorm() / static_cast<double>(n);
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(max_lag + 1);
  rho(0) = 1.0;
  if (!(c0 > 1e-300)) return rho;
  for (Eigen::Index k = 1; k <= max_lag; ++k)
    rho(k) = c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n) / c0;
  return rho;
}

double effective_sample_size(const Eigen::VectorXd& series) {
  const Eigen::Index n = series.size();
  if (n < 4) return static_cast<double>(n);
  const Eigen::VectorXd rho = autocorrelation(series, n - 1);
  double sum = 0.0;
  for (Eigen::Index m = 0; 2 * m + 1 < n; ++m) {
    const double pair = rho(2 * m) + rho(2 * m + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1e-12);
  return static_cast<double>(n) / tau;
}

double batch_means_se(const Eigen::VectorXd& series, Eigen::Index batches) {
  const Eigen::Index n = series.size();
  if (batches < 2 || n < 2 * batches) throw UsageError("batch_means_se: series too short");
  const Eigen::Index size = n / batches;
  Eigen::VectorXd means(batches);
  for (Eigen::Index b = 0; b < batches; ++b) means(b) = series.segment(b * size, size).mean();
  const double var = (means.array() - means.mean()).square().sum() / static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

double geweke_z(const Eigen::VectorXd& independent, const Eigen::VectorXd& chain,
                Eigen::Index batches) {
  const double na = static_cast<double>(independent.size());
  if (na < 2) throw UsageError("geweke_z: need at least two independent draws");
  const double mean_a = independent.mean();
  const double var_a = (independent.array() - mean_a).square().sum() / (na - 1.0);
  const double se_b = batch_means_se(chain, batches);
  return (mean_a - chain.mean()) / std::sqrt(var_a / na + se_b * se_b);
}

TraceReport make_trace_report(std::string name, Eigen::VectorXd values, double runtime_seconds,
                              Eigen::Index max_lag) {
  TraceReport r;
  r.name = std::move(name);
  r.runtime_seconds = runtime_seconds;
  if (values.size() > 0) {
    r.autocorrelation = autocorrelation(values, std::min<Eigen::Index>(max_lag, values.size() - 1));
    r.effective_sample_size = effective_sample_size(values);
  }
  r.values = std::move(values);
  return r;
}

std::vector<CompareRow> compare_report(const std::vector<MethodResult>& results) {
  std::vector<CompareRow> rows;
  rows.reserve(results.size());
  for (const auto& m : results) {
    CompareRow row{m.method, m.ell_test, m.runtime_seconds, {}, m.dim, m.n_train, m.n_test};
    if (!m.failure.empty()) row.flags.push_back("failed: " + m.failure);
    if (m.flagged) row.flags.push_back("normalizer_error_above_1pct");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_table(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %4s %8s %7s %14s %12s  %s\n", "method", "dim", "n_train",
                "n_test", "ell_test", "runtime_s", "flags");
  out << line;
  for (const auto& r : rows) {
    const std::string ell = r.ell_test ? std::to_string(*r.ell_test) : std::string("-");
    std::string flags;
    for (const auto& f : r.flags) flags += (flags.empty() ? "" : "; ") + f;
    std::snprintf(line, sizeof line, "%-8s %4ld %8ld %7ld %14s %12.3f  ", r.method.c_str(),
                  static_cast<long>(r.dim), static_cast<long>(r.n_train),
                  static_cast<long>(r.n_test), ell.c_str(), r.runtime_seconds);
    out << line << flags << '\n';
  }
  return out.str();
}

}  // namespace gpdense
