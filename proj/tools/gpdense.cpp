#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpdense/cli.hpp"
#include "gpdense/errors.hpp"

namespace {

gpdense::cli::ConfigFile load_with_overrides(const std::string& path,
                                             const std::vector<std::string>& overrides) {
  auto file = path.empty() ? gpdense::cli::ConfigFile{} : gpdense::cli::ConfigFile::load(path);
  for (const auto& o : overrides) file.apply_override(o);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace gpdense;
  CLI::App app{"Gaussian-process density estimation: Gibbs and variational inference, baselines"};
  app.require_subcommand(1);

  std::string fit_config;
  std::vector<std::string> fit_set;
  auto* fit = app.add_subcommand("fit", "fit a model described by a key = value config file");
  fit->add_option("config", fit_config, "config file")->check(CLI::ExistingFile);
  fit->add_option("-s,--set", fit_set, "override a config entry (key=value)");

  std::string model_path, test_path, eval_out;
  int samples = 0, normalizer_points = 5000;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "expected test log likelihood of a fitted model");
  eval->add_option("model", model_path, "JSON written by fit")->required()->check(CLI::ExistingFile);
  eval->add_option("test", test_path, "test CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--samples", samples, "posterior draws (default: all Gibbs snapshots, 100 VB draws)");
  eval->add_option("--normalizer-points", normalizer_points, "importance points for the normalizer");
  eval->add_option("--seed", eval_seed, "random seed")->required();
  eval->add_option("-o,--output", eval_out, "write metrics JSON here");

  cli::GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "sample a synthetic dataset");
  generate->add_option("--recipe", gen.recipe, "gp (draw from the model) or circle")
      ->check(CLI::IsMember({"gp", "circle"}));
  generate->add_option("--dim", gen.dim, "data dimension (gp recipe)");
  generate->add_option("-n,--n", gen.n, "number of points");
  generate->add_option("--test-n", gen.test_n, "extra points from the same density");
  generate->add_option("--amplitude", gen.amplitude, "kernel amplitude");
  generate->add_option("--lengthscales", gen.lengthscales, "kernel lengthscale(s)")->delimiter(',');
  generate->add_option("--mu0", gen.mu0, "GP prior mean");
  generate->add_option("--radius", gen.radius, "circle radius");
  generate->add_option("--noise", gen.noise, "circle noise std");
  generate->add_option("--seed", gen.seed, "random seed")->required();
  generate->add_option("-o,--output", gen.output_path, "training CSV")->required();
  generate->add_option("--test-output", gen.test_output_path, "test CSV");
  generate->add_option("--truth", gen.truth_path, "JSON dump of the realized function");

  std::vector<std::string> compare_configs, compare_set;
  std::string compare_test, compare_out;
  auto* compare = app.add_subcommand("compare", "fit several configs and tabulate test likelihoods");
  compare->add_option("configs", compare_configs, "config files")->required()->check(CLI::ExistingFile);
  compare->add_option("--test", compare_test, "shared test CSV")->check(CLI::ExistingFile);
  compare->add_option("-s,--set", compare_set, "override applied to every config (key=value)");
  compare->add_option("-o,--output", compare_out, "comparison JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cli::cmd_fit(load_with_overrides(fit_config, fit_set));
    if (*eval) return cli::cmd_eval(model_path, test_path, samples, normalizer_points, eval_seed, eval_out);
    if (*generate) return cli::cmd_generate(gen);
    if (*compare) {
      std::vector<cli::ConfigFile> files;
      for (const auto& path : compare_configs) files.push_back(load_with_overrides(path, compare_set));
      return cli::cmd_compare(files, compare_test, compare_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const FlaggedResultError& e) {
    std::cerr << "flagged result: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
