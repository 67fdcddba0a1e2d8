#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpdense/base_measure.hpp"
#include "gpdense/baselines.hpp"
#include "gpdense/density.hpp"
#include "gpdense/diagnostics.hpp"
#include "gpdense/gibbs.hpp"
#include "gpdense/kernel.hpp"
#include "gpdense/variational.hpp"

namespace gpdense::cli {

using Json = nlohmann::json;

// ---------------------------------------------------------------- config

/// Flat `key = value` file with `#` comments and dotted namespaces.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source = "<config>");
  static ConfigFile load(const std::string& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  /// Applies a `key=value` override.
  void apply_override(const std::string& assignment);
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;

 private:
  std::map<std::string, std::string> entries_;
};

enum class Method { Gibbs, VB, KDE, GMM };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct BaseSpec {
  std::string kind = "standard_normal";  // standard_normal | diagonal_gaussian | gmm
  std::vector<double> mean;
  std::vector<double> scales;
  int components = 3;
  int restarts = 10;
};

struct RunConfig {
  Method method = Method::VB;
  std::string data_path;
  std::string test_path;
  std::string output_path;
  std::uint64_t seed = 0;
  bool whiten = true;

  BaseSpec base;
  double amplitude = 1.0;
  std::vector<double> lengthscales{1.0};
  double mu0 = 0.0;

  GibbsConfig gibbs;
  VBConfig vb;

  std::vector<double> kde_bandwidths;  // empty: default grid
  int kde_folds = 10;
  std::vector<int> gmm_components;     // empty: 1..10
  int gmm_folds = 10;
  int gmm_restarts = 10;

  /// Posterior draws used for density evaluation (<= 0: method default).
  int eval_samples = 0;
  int eval_normalizer_points = 5000;
  double eval_residual_tolerance = 1e-8;
  /// Grid points per axis for the saved density (1D/2D); 0 disables the grid.
  int grid_points = 0;

  int effective_eval_samples() const;
};

/// Validates keys and values; GPDENSE_SEED overrides `seed`.
RunConfig run_config_from(const ConfigFile& file);

// ---------------------------------------------------------------- csv

/// Rows of comma-separated decimals, optional non-numeric header row.
Dataset ingest_csv(const std::string& path);
Eigen::MatrixXd parse_csv(std::istream& in, const std::string& source);
void write_csv(const std::string& path, const Eigen::MatrixXd& points);

// ---------------------------------------------------------------- serialization

Json to_json(const Eigen::MatrixXd& m);
Json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const Json& j);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const KernelParams& k);
KernelParams kernel_from_json(const Json& j);
Json to_json(const BaseMeasure& b);
BaseMeasure base_from_json(const Json& j);
Json to_json(const Whitening& w);
Whitening whitening_from_json(const Json& j);

/// A fitted model, enough to evaluate densities again.
struct FittedModel {
  Method method = Method::VB;
  std::optional<Whitening> whitening;
  Eigen::MatrixXd train;  // in model (whitened) space
  GibbsChain chain;
  SparseVBState vb;
  KdeModel kde;
  GmmModel gmm;
};

Json model_to_json(const FittedModel& m);
FittedModel model_from_json(const Json& j);

// ---------------------------------------------------------------- evaluation

struct Evaluation {
  double ell_test = 0.0;
  double max_normalizer_rel_error = 0.0;
  double mean_normalizer_rel_error = 0.0;
  Eigen::Index samples = 0;
  Eigen::VectorXd per_sample;  // per-sample sum_n log rho_s (empty for baselines)
};

/// ell_test of `test` (data space) under the model; throws FlaggedResultError
/// when the normalizer guard trips.
Evaluation evaluate(const FittedModel& model, const Eigen::MatrixXd& test, int samples,
                    int normalizer_points, double residual_tolerance, std::uint64_t seed);

/// Mean density on a regular grid spanning +-4 std of `reference` (1D/2D only).
Json density_grid(const FittedModel& model, const Eigen::MatrixXd& reference, int points_per_axis,
                  int samples, int normalizer_points, double residual_tolerance,
                  std::uint64_t seed);

// ---------------------------------------------------------------- commands

struct FitOutput {
  Json document;  // {meta, config_echo, trace, model, density_grid, metrics}
  MethodResult result;
};

FitOutput run_fit(const RunConfig& config, const ConfigFile& echo, const Eigen::MatrixXd& train,
                  const std::optional<Eigen::MatrixXd>& test);

/// Writes `doc` to `path` (pretty JSON) or stdout for "-".
void write_json(const std::string& path, const Json& doc);
Json read_json(const std::string& path);

/// The document without its `meta` block, serialized; the determinism contract.
std::string primary_output(const Json& doc);

int cmd_fit(const ConfigFile& file);
int cmd_eval(const std::string& model_path, const std::string& test_path, int samples,
             int normalizer_points, std::uint64_t seed, const std::string& output_path);

struct GenerateOptions {
  std::string recipe = "gp";  // gp | circle
  Eigen::Index dim = 1;
  Eigen::Index n = 100;
  Eigen::Index test_n = 0;
  double amplitude = 2.0;
  std::vector<double> lengthscales{0.5};
  double mu0 = 0.0;
  double radius = 1.5;
  double noise = 0.2;
  std::uint64_t seed = 0;
  std::string output_path;
  std::string test_output_path;
  std::string truth_path;
};

int cmd_generate(const GenerateOptions& options);
int cmd_compare(const std::vector<ConfigFile>& configs, const std::string& test_path,
                const std::string& output_path);

}  // namespace gpdense::cli
