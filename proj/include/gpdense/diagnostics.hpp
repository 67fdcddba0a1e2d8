#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gpdense {

/// Biased autocorrelation estimate for lags 0..max_lag, normalised so lag 0 is 1.
/// A constant series gives 1 at lag 0 and 0 elsewhere.
Eigen::VectorXd autocorrelation(const Eigen::VectorXd& series, Eigen::Index max_lag);

/// Effective sample size with Geyer's initial positive sequence truncation.
double effective_sample_size(const Eigen::VectorXd& series);

/// Standard error of the mean from non-overlapping batch means.
double batch_means_se(const Eigen::VectorXd& series, Eigen::Index batches = 50);

/// (mean(a) - mean(b)) / sqrt(se_a^2 + se_b^2) where `a` is i.i.d. and `b` a
/// Markov chain (batch-means error).
double geweke_z(const Eigen::VectorXd& independent, const Eigen::VectorXd& chain,
                Eigen::Index batches = 50);

struct TraceReport {
  std::string name;
  Eigen::VectorXd values;
  double runtime_seconds = 0.0;
  Eigen::VectorXd autocorrelation;
  double effective_sample_size = 0.0;
};

TraceReport make_trace_report(std::string name, Eigen::VectorXd values, double runtime_seconds,
                              Eigen::Index max_lag = 50);

struct MethodResult {
  std::string method;
  std::optional<double> ell_test;
  double runtime_seconds = 0.0;
  /// Empty when the run succeeded; otherwise what went wrong.
  std::string failure;
  bool flagged = false;
  Eigen::Index dim = 0;
  Eigen::Index n_train = 0;
  Eigen::Index n_test = 0;
};

struct CompareRow {
  std::string method;
  std::optional<double> ell_test;
  double runtime_seconds = 0.0;
  std::vector<std::string> flags;
  Eigen::Index dim = 0;
  Eigen::Index n_train = 0;
  Eigen::Index n_test = 0;
};

/// One row per method, in input order.
std::vector<CompareRow> compare_report(const std::vector<MethodResult>& results);

/// Fixed-width text rendering of a comparison table.
std::string format_table(const std::vector<CompareRow>& rows);

}  // namespace gpdense
