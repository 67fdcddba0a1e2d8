#include <chrono>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "gpdense/cli.hpp"
#include "gpdense/errors.hpp"
#include "gpdense/synthgen.hpp"

namespace gpdense::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

Json echo_json(const ConfigFile& file) {
  Json j = Json::object();
  for (const auto& [k, v] : file.entries()) j[k] = v;
  return j;
}

Eigen::VectorXd broadcast(const std::vector<double>& values, Eigen::Index dim, const char* what) {
  if (values.size() == 1) return Eigen::VectorXd::Constant(dim, values[0]);
  if (static_cast<Eigen::Index>(values.size()) != dim)
    throw UsageError(std::string(what) + ": need 1 or " + std::to_string(dim) + " values");
  return Eigen::Map<const Eigen::VectorXd>(values.data(), dim);
}

BaseMeasure make_base(const BaseSpec& spec, const Dataset& data, Rng& rng) {
  const Eigen::Index d = data.dim();
  if (spec.kind == "standard_normal") return BaseMeasure::standard_normal(d);
  if (spec.kind == "diagonal_gaussian") {
    const std::vector<double> mean = spec.mean.empty() ? std::vector<double>{0.0} : spec.mean;
    const std::vector<double> scales = spec.scales.empty() ? std::vector<double>{1.0} : spec.scales;
    return BaseMeasure::diagonal_gaussian(broadcast(mean, d, "base.mean"),
                                          broadcast(scales, d, "base.scales"));
  }
  return fit_gmm(data, spec.components, spec.restarts, rng).mixture;
}

/// Every `k`-th of the stored snapshots so at most `keep` remain (evenly spaced).
void keep_evenly(GibbsChain& chain, int keep) {
  const auto n = static_cast<long>(chain.samples.size());
  if (keep <= 0 || n <= keep) return;
  std::vector<GibbsState> samples;
  std::vector<long> index;
  for (long i = 0; i < keep; ++i) {
    const long at = keep == 1 ? n - 1 : (i * (n - 1)) / (keep - 1);
    samples.push_back(chain.samples[static_cast<std::size_t>(at)]);
    index.push_back(chain.sweep_index[static_cast<std::size_t>(at)]);
  }
  chain.samples = std::move(samples);
  chain.sweep_index = std::move(index);
}

}  // namespace

FitOutput run_fit(const RunConfig& config, const ConfigFile& echo, const Eigen::MatrixXd& train,
                  const std::optional<Eigen::MatrixXd>& test) {
  const auto started = Clock::now();
  const Dataset raw(train);
  if (raw.size() < 1) throw UsageError("fit: empty training data");
  const Dataset data = config.whiten ? whiten(raw) : raw;
  const Eigen::Index d = data.dim();

  FittedModel model;
  model.method = config.method;
  model.whitening = data.whitening();
  model.train = config.method == Method::Gibbs || config.method == Method::VB ? data.points()
                                                                             : Eigen::MatrixXd(0, d);

  Rng rng = make_rng(config.seed, 0);
  const BaseMeasure base = make_base(config.base, data, rng);
  const KernelParams kernel =
      KernelParams::natural(config.amplitude, broadcast(config.lengthscales, d, "kernel.lengthscales"));

  Json trace = Json::object();
  switch (config.method) {
    case Method::Gibbs: {
      GibbsState init = initial_state(data, kernel, config.mu0, base, rng);
      Json lambda = Json::array(), count = Json::array(), mu0 = Json::array(), kpar = Json::array();
      const auto record = [&](const GibbsState& s, long) {
        lambda.push_back(s.lambda);
        count.push_back(s.latent.size());
        mu0.push_back(s.mu0);
        kpar.push_back(to_json(Eigen::VectorXd(s.kernel.to_vector())));
      };
      GibbsChain chain = run_chain(data, config.gibbs, std::move(init), rng, record);
      trace["lambda"] = std::move(lambda);
      trace["latent_count"] = std::move(count);
      trace["mu0"] = std::move(mu0);
      trace["kernel_log_params"] = std::move(kpar);
      trace["mh_acceptance"] = {{"kernel", chain.moves.kernel.rate()}, {"base", chain.moves.base.rate()}};
      trace["mh_step"] = {{"kernel", to_json(chain.moves.kernel_step)},
                          {"base", to_json(chain.moves.base_step)}};
      trace["thinning"] = chain.thinning;
      keep_evenly(chain, config.effective_eval_samples());
      model.chain = std::move(chain);
      break;
    }
    case Method::VB: {
      SparseVBState init = initial_vb_state(data, kernel, config.mu0, base, config.vb, rng);
      VBResult res = run_vb(data, config.vb, std::move(init));
      trace["elbo"] = res.elbo_trace;
      trace["iterations"] = res.iterations;
      trace["converged"] = res.converged;
      model.vb = std::move(res.state);
      break;
    }
    case Method::KDE: {
      const auto grid = config.kde_bandwidths.empty() ? default_bandwidth_grid(data) : config.kde_bandwidths;
      KdeFit fit = fit_kde_cv(data, grid, config.kde_folds, rng);
      trace["bandwidths"] = fit.candidates;
      trace["cv_scores"] = fit.scores;
      trace["selected"] = fit.model.bandwidth;
      model.kde = std::move(fit.model);
      break;
    }
    case Method::GMM: {
      const auto grid = config.gmm_components.empty() ? default_component_grid() : config.gmm_components;
      GmmCvFit fit = fit_gmm_cv(data, grid, config.gmm_folds, config.gmm_restarts, rng);
      trace["components"] = fit.candidates;
      trace["cv_scores"] = fit.scores;
      trace["selected"] = fit.model.components;
      model.gmm = std::move(fit.model);
      break;
    }
  }
  const double fit_seconds = seconds_since(started);

  FitOutput out;
  out.result.method = method_name(config.method);
  out.result.runtime_seconds = fit_seconds;
  out.result.dim = d;
  out.result.n_train = data.size();

  // Gibbs: every stored snapshot; VB: the configured number of draws.
  const int eval_samples = config.method == Method::Gibbs ? -1 : config.effective_eval_samples();
  Json metrics = {{"dim", d}, {"n_train", data.size()}};
  const auto eval_started = Clock::now();
  if (test) {
    out.result.n_test = test->rows();
    metrics["n_test"] = test->rows();
    try {
      const Evaluation ev = evaluate(model, *test, eval_samples, config.eval_normalizer_points,
                                     config.eval_residual_tolerance, config.seed);
      out.result.ell_test = ev.ell_test;
      metrics["ell_test"] = ev.ell_test;
      metrics["posterior_samples"] = ev.samples;
      if (ev.per_sample.size() > 0) {
        metrics["normalizer_max_rel_error"] = ev.max_normalizer_rel_error;
        metrics["normalizer_mean_rel_error"] = ev.mean_normalizer_rel_error;
        metrics["per_sample_log_likelihood"] = to_json(ev.per_sample);
      }
      metrics["flagged"] = false;
    } catch (const FlaggedResultError& e) {
      out.result.flagged = true;
      metrics["ell_test"] = nullptr;
      metrics["flagged"] = true;
      metrics["flag_reason"] = e.what();
    }
  }
  Json grid = nullptr;
  if (config.grid_points > 0)
    grid = density_grid(model, raw.points(), config.grid_points, eval_samples,
                        config.eval_normalizer_points, config.eval_residual_tolerance, config.seed);

  out.document = {
      {"meta",
       {{"command", "fit"},
        {"started_at", utc_timestamp()},
        {"fit_runtime_seconds", fit_seconds},
        {"eval_runtime_seconds", seconds_since(eval_started)}}},
      {"config_echo", echo_json(echo)},
      {"trace", trace},
      {"model", model_to_json(model)},
      {"density_grid", grid},
      {"metrics", metrics}};
  return out;
}

int cmd_fit(const ConfigFile& file) {
  const RunConfig config = run_config_from(file);
  if (config.data_path.empty()) throw UsageError("config: missing required key 'data'");
  const Dataset train = ingest_csv(config.data_path);
  std::optional<Eigen::MatrixXd> test;
  if (!config.test_path.empty()) test = ingest_csv(config.test_path).points();
  const FitOutput out = run_fit(config, file, train.points(), test);
  write_json(config.output_path, out.document);
  if (out.result.ell_test) std::cerr << "ell_test = " << std::setprecision(10) << *out.result.ell_test << '\n';
  if (out.result.flagged) {
    std::cerr << "error: " << out.document["metrics"]["flag_reason"].get<std::string>() << '\n';
    return 3;
  }
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test_path, int samples,
             int normalizer_points, std::uint64_t seed, const std::string& output_path) {
  const auto started = Clock::now();
  const Json doc = read_json(model_path);
  const FittedModel model = model_from_json(doc.contains("model") ? doc.at("model") : doc);
  const Eigen::MatrixXd test = ingest_csv(test_path).points();
  const int s = samples > 0 ? samples : (model.method == Method::Gibbs ? -1 : 100);
  const Evaluation ev = evaluate(model, test, s, normalizer_points, 1e-8, seed);
  Json metrics = {{"ell_test", ev.ell_test}, {"posterior_samples", ev.samples}, {"n_test", test.rows()}};
  if (ev.per_sample.size() > 0) {
    metrics["normalizer_max_rel_error"] = ev.max_normalizer_rel_error;
    metrics["normalizer_mean_rel_error"] = ev.mean_normalizer_rel_error;
  }
  const Json out = {{"meta", {{"command", "eval"}, {"started_at", utc_timestamp()},
                              {"runtime_seconds", seconds_since(started)}}},
                    {"config_echo", {{"model", model_path}, {"test", test_path}, {"samples", samples},
                                     {"normalizer_points", normalizer_points}, {"seed", seed}}},
                    {"metrics", metrics}};
  if (!output_path.empty()) write_json(output_path, out);
  std::cout << std::setprecision(10) << ev.ell_test << '\n';
  return 0;
}

int cmd_generate(const GenerateOptions& o) {
  if (o.n < 1) throw UsageError("generate: n must be at least 1");
  if (o.test_n < 0) throw UsageError("generate: test-n must be nonnegative");
  if (o.output_path.empty()) throw UsageError("generate: an output path is required");
  Rng rng = make_rng(o.seed, 0);
  Json truth = {{"recipe", o.recipe}, {"seed", o.seed}};
  Eigen::MatrixXd train, test;
  if (o.recipe == "circle") {
    if (o.dim != 2 && o.dim != 1) throw UsageError("generate: the circle recipe is two-dimensional");
    train = circle_points(o.n, o.radius, o.noise, rng);
    if (o.test_n > 0) test = circle_points(o.test_n, o.radius, o.noise, rng);
    truth["radius"] = o.radius;
    truth["noise"] = o.noise;
  } else if (o.recipe == "gp") {
    if (o.dim < 1) throw UsageError("generate: dim must be at least 1");
    const KernelParams kernel =
        KernelParams::natural(o.amplitude, broadcast(o.lengthscales, o.dim, "lengthscales"));
    const BaseMeasure base = BaseMeasure::standard_normal(o.dim);
    GeneratedModel gen = generate_dataset(kernel, o.mu0, base, o.n, rng);
    train = gen.sample.data.points();
    if (o.test_n > 0) test = draw_from_path(gen.gp, base, o.test_n, rng).data.points();
    truth["kernel"] = to_json(kernel);
    truth["mu0"] = o.mu0;
    truth["base"] = to_json(base);
    truth["locations"] = to_json(gen.gp.locations());
    truth["values"] = to_json(gen.gp.values());
  } else {
    throw UsageError("generate: unknown recipe '" + o.recipe + "' (expected gp or circle)");
  }
  write_csv(o.output_path, train);
  if (o.test_n > 0) {
    if (o.test_output_path.empty()) throw UsageError("generate: test-n needs a test output path");
    write_csv(o.test_output_path, test);
  }
  if (!o.truth_path.empty()) write_json(o.truth_path, truth);
  return 0;
}

int cmd_compare(const std::vector<ConfigFile>& configs, const std::string& test_path,
                const std::string& output_path) {
  if (configs.empty()) throw UsageError("compare: at least one config is required");
  std::vector<MethodResult> results;
  Json echo = Json::array(), runtimes = Json::array(), failures = Json::array();
  int exit_code = 0;
  for (const auto& file : configs) {
    echo.push_back(echo_json(file));
    MethodResult r;
    r.method = file.get("method", "?");
    try {
      const RunConfig config = run_config_from(file);
      const std::string tp = test_path.empty() ? config.test_path : test_path;
      if (tp.empty()) throw UsageError("compare: no shared test set (use --test)");
      if (config.data_path.empty()) throw UsageError("config: missing required key 'data'");
      const Dataset train = ingest_csv(config.data_path);
      const Eigen::MatrixXd test = ingest_csv(tp).points();
      r = run_fit(config, file, train.points(), test).result;
      if (r.flagged) exit_code = std::max(exit_code, 3);
    } catch (const Error& e) {
      r.failure = e.what();
      exit_code = 2;
    } catch (const std::invalid_argument& e) {
      r.failure = e.what();
      exit_code = 2;
    }
    runtimes.push_back(r.runtime_seconds);
    results.push_back(r);
  }
  const auto rows = compare_report(results);
  Json table = Json::array();
  for (const auto& row : rows)
    table.push_back({{"method", row.method},
                     {"ell_test", row.ell_test ? Json(*row.ell_test) : Json(nullptr)},
                     {"flags", row.flags},
                     {"dim", row.dim},
                     {"n_train", row.n_train},
                     {"n_test", row.n_test}});
  const Json doc = {{"meta", {{"command", "compare"}, {"started_at", utc_timestamp()},
                              {"runtime_seconds", runtimes}}},
                    {"config_echo", echo},
                    {"trace", nullptr},
                    {"model", nullptr},
                    {"density_grid", nullptr},
                    {"metrics", {{"rows", table}}}};
  if (!output_path.empty()) write_json(output_path, doc);
  std::cout << format_table(rows);
  return exit_code;
}

}  // namespace gpdense::cli
