#include <cmath>
#include <fstream>
#include <iostream>

#include "gpdense/cli.hpp"
#include "gpdense/errors.hpp"

namespace gpdense::cli {

Json to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw UsageError("model file: expected a matrix (array of rows)");
  if (j.empty()) return Eigen::MatrixXd(0, 0);
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw UsageError("model file: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw UsageError("model file: expected a vector");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Json to_json(const KernelParams& k) {
  return {{"log_amplitude", k.log_amplitude}, {"log_lengthscales", to_json(k.log_lengthscales)}};
}

KernelParams kernel_from_json(const Json& j) {
  return {j.at("log_amplitude").get<double>(), vector_from_json(j.at("log_lengthscales"))};
}

Json to_json(const BaseMeasure& b) {
  switch (b.kind()) {
    case BaseKind::StandardNormal:
      return {{"kind", "standard_normal"}, {"dim", b.dim()}};
    case BaseKind::DiagonalGaussian:
      return {{"kind", "diagonal_gaussian"}, {"mean", to_json(b.mean())}, {"scales", to_json(b.scales())}};
    case BaseKind::GaussianMixture: {
      Json means = Json::array(), covs = Json::array();
      for (const auto& m : b.means()) means.push_back(to_json(m));
      for (const auto& c : b.covariances()) covs.push_back(to_json(c));
      return {{"kind", "gmm"}, {"weights", to_json(b.weights())}, {"means", means}, {"covariances", covs}};
    }
  }
  return {};
}

BaseMeasure base_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "standard_normal") return BaseMeasure::standard_normal(j.at("dim").get<Eigen::Index>());
  if (kind == "diagonal_gaussian")
    return BaseMeasure::diagonal_gaussian(vector_from_json(j.at("mean")), vector_from_json(j.at("scales")));
  if (kind == "gmm") {
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (const auto& m : j.at("means")) means.push_back(vector_from_json(m));
    for (const auto& c : j.at("covariances")) covs.push_back(matrix_from_json(c));
    return BaseMeasure::gaussian_mixture(vector_from_json(j.at("weights")), means, covs);
  }
  throw UsageError("model file: unknown base kind '" + kind + "'");
}

Json to_json(const Whitening& w) {
  return {{"mean", to_json(w.mean)}, {"transform", to_json(w.transform)}};
}

Whitening whitening_from_json(const Json& j) {
  return {vector_from_json(j.at("mean")), matrix_from_json(j.at("transform"))};
}

namespace {

Json state_to_json(const GibbsState& s) {
  return {{"g", to_json(s.g_values)},
          {"omega", to_json(s.omega)},
          {"latent_locations", to_json(s.latent.locations)},
          {"latent_marks", to_json(s.latent.marks)},
          {"lambda", s.lambda},
          {"kernel", to_json(s.kernel)},
          {"mu0", s.mu0},
          {"base", to_json(s.base)}};
}

GibbsState state_from_json(const Json& j, Eigen::Index dim) {
  GibbsState s;
  s.g_values = vector_from_json(j.at("g"));
  s.omega = vector_from_json(j.at("omega"));
  s.latent.marks = vector_from_json(j.at("latent_marks"));
  s.latent.locations = matrix_from_json(j.at("latent_locations"));
  if (s.latent.locations.size() == 0) s.latent.locations.resize(0, dim);
  s.lambda = j.at("lambda").get<double>();
  s.kernel = kernel_from_json(j.at("kernel"));
  s.mu0 = j.at("mu0").get<double>();
  s.base = base_from_json(j.at("base"));
  return s;
}

}  // namespace

Json model_to_json(const FittedModel& m) {
  Json j;
  j["method"] = method_name(m.method);
  j["whitening"] = m.whitening ? to_json(*m.whitening) : Json(nullptr);
  j["dim"] = m.train.cols();
  switch (m.method) {
    case Method::Gibbs: {
      j["train"] = to_json(m.train);
      Json samples = Json::array();
      for (const auto& s : m.chain.samples) samples.push_back(state_to_json(s));
      j["samples"] = std::move(samples);
      j["sweep_index"] = m.chain.sweep_index;
      break;
    }
    case Method::VB:
      j["train"] = to_json(m.train);
      j["inducing"] = to_json(m.vb.inducing);
      j["mu"] = to_json(m.vb.mu);
      j["sigma_factor"] = to_json(m.vb.sigma_factor);
      j["sigma_log_det"] = m.vb.sigma_log_det;
      j["alpha2"] = m.vb.alpha2;
      j["kernel"] = to_json(m.vb.kernel);
      j["mu0"] = m.vb.mu0;
      j["base"] = to_json(m.vb.base);
      break;
    case Method::KDE:
      j["bandwidth"] = m.kde.bandwidth;
      j["points"] = to_json(m.kde.points);
      break;
    case Method::GMM:
      j["components"] = m.gmm.components;
      j["mixture"] = to_json(m.gmm.mixture);
      break;
  }
  return j;
}

FittedModel model_from_json(const Json& j) {
  try {
    FittedModel m;
    m.method = parse_method(j.at("method").get<std::string>());
    if (!j.at("whitening").is_null()) m.whitening = whitening_from_json(j.at("whitening"));
    const auto dim = j.at("dim").get<Eigen::Index>();
    switch (m.method) {
      case Method::Gibbs:
        m.train = matrix_from_json(j.at("train"));
        for (const auto& s : j.at("samples")) m.chain.samples.push_back(state_from_json(s, dim));
        m.chain.sweep_index = j.at("sweep_index").get<std::vector<long>>();
        break;
      case Method::VB:
        m.train = matrix_from_json(j.at("train"));
        m.vb.inducing = matrix_from_json(j.at("inducing"));
        m.vb.mu = vector_from_json(j.at("mu"));
        m.vb.set_covariance_factor(matrix_from_json(j.at("sigma_factor")),
                                   j.at("sigma_log_det").get<double>());
        m.vb.alpha2 = j.at("alpha2").get<double>();
        m.vb.kernel = kernel_from_json(j.at("kernel"));
        m.vb.mu0 = j.at("mu0").get<double>();
        m.vb.base = base_from_json(j.at("base"));
        break;
      case Method::KDE:
        m.kde.bandwidth = j.at("bandwidth").get<double>();
        m.kde.points = matrix_from_json(j.at("points"));
        break;
      case Method::GMM:
        m.gmm.components = j.at("components").get<int>();
        m.gmm.mixture = base_from_json(j.at("mixture"));
        break;
    }
    if (m.method != Method::Gibbs && m.method != Method::VB) m.train.resize(0, dim);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("model file: ") + e.what());
  }
}

namespace {

Eigen::MatrixXd to_model_space(const FittedModel& m, const Eigen::MatrixXd& x) {
  return m.whitening ? m.whitening->apply(x) : x;
}

double jacobian(const FittedModel& m) { return m.whitening ? m.whitening->log_abs_det() : 0.0; }

DensityEstimate gp_estimate(const FittedModel& m, const Eigen::MatrixXd& x_model, int samples,
                            int normalizer_points, double residual_tolerance, Rng& rng) {
  DensityOptions opts;
  opts.samples = samples;
  opts.normalizer_points = normalizer_points;
  opts.residual_tolerance = residual_tolerance;
  // Kernels at the training points put normalizer points where the density concentrates.
  if (m.train.rows() > 0) opts.proposal = NormalizerProposal::around(m.train);
  DensityEstimate est = m.method == Method::Gibbs
                            ? posterior_density_samples(m.chain, Dataset(m.train), x_model, opts, rng)
                            : posterior_density_samples(m.vb, x_model, opts, rng);
  est.log_jacobian = jacobian(m);
  return est;
}

}  // namespace

Evaluation evaluate(const FittedModel& model, const Eigen::MatrixXd& test, int samples,
                    int normalizer_points, double residual_tolerance, std::uint64_t seed) {
  if (test.rows() == 0) throw UsageError("evaluation: empty test set");
  const Eigen::Index dim = model.train.cols();
  if (test.cols() != dim)
    throw UsageError("evaluation: test data have dimension " + std::to_string(test.cols()) +
                     ", model expects " + std::to_string(dim));
  const Eigen::MatrixXd x = to_model_space(model, test);
  Evaluation ev;
  switch (model.method) {
    case Method::Gibbs:
    case Method::VB: {
      Rng rng = make_rng(seed, 1);
      const DensityEstimate est =
          gp_estimate(model, x, samples, normalizer_points, residual_tolerance, rng);
      ev.samples = est.samples();
      ev.max_normalizer_rel_error = est.max_relative_error();
      ev.mean_normalizer_rel_error = (est.normalizer_se.array() / est.normalizer.array()).mean();
      ev.per_sample = per_sample_log_likelihood(est);
      ev.ell_test = log_expected_test_likelihood(est);
      break;
    }
    case Method::KDE:
      ev.ell_test = model.kde.logpdf_rows(x).sum() + static_cast<double>(x.rows()) * jacobian(model);
      ev.samples = 1;
      break;
    case Method::GMM:
      ev.ell_test = model.gmm.logpdf_rows(x).sum() + static_cast<double>(x.rows()) * jacobian(model);
      ev.samples = 1;
      break;
  }
  return ev;
}

Json density_grid(const FittedModel& model, const Eigen::MatrixXd& reference, int points_per_axis,
                  int samples, int normalizer_points, double residual_tolerance,
                  std::uint64_t seed) {
  const Eigen::Index d = reference.cols();
  if (points_per_axis < 2 || d < 1 || d > 2 || reference.rows() < 2) return nullptr;
  const Eigen::RowVectorXd mean = reference.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((reference.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(reference.rows() - 1))
          .cwiseSqrt();
  Json axes = Json::array();
  std::vector<Eigen::VectorXd> ticks;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double lo = mean(k) - 4.0 * sd(k), hi = mean(k) + 4.0 * sd(k);
    ticks.push_back(Eigen::VectorXd::LinSpaced(points_per_axis, lo, hi));
    axes.push_back({{"min", lo}, {"max", hi}, {"count", points_per_axis}});
  }
  const Eigen::Index q = d == 1 ? points_per_axis : points_per_axis * points_per_axis;
  Eigen::MatrixXd grid(q, d);
  for (Eigen::Index i = 0; i < q; ++i) {
    if (d == 1) {
      grid(i, 0) = ticks[0](i);
    } else {
      grid(i, 0) = ticks[0](i / points_per_axis);
      grid(i, 1) = ticks[1](i % points_per_axis);
    }
  }
  const Eigen::MatrixXd x = to_model_space(model, grid);
  Eigen::VectorXd values;
  Json out;
  switch (model.method) {
    case Method::Gibbs:
    case Method::VB: {
      Rng rng = make_rng(seed, 2);
      const DensityEstimate est =
          gp_estimate(model, x, samples, normalizer_points, residual_tolerance, rng);
      values = est.mean_density();
      out["normalizer_max_rel_error"] = est.max_relative_error();
      break;
    }
    case Method::KDE:
      values = (model.kde.logpdf_rows(x).array() + jacobian(model)).exp();
      break;
    case Method::GMM:
      values = (model.gmm.logpdf_rows(x).array() + jacobian(model)).exp();
      break;
  }
  out["axes"] = axes;
  out["values"] = to_json(values);
  return out;
}

void write_json(const std::string& path, const Json& doc) {
  if (path.empty() || path == "-") {
    std::cout << doc.dump(1) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << doc.dump(1) << '\n';
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string primary_output(const Json& doc) {
  Json copy = doc;
  copy.erase("meta");
  return copy.dump();
}

}  // namespace gpdense::cli
