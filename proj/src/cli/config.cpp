#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "gpdense/cli.hpp"
#include "gpdense/errors.hpp"

namespace gpdense::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "method", "data", "test", "output", "seed", "whiten",
      "base.kind", "base.mean", "base.scales", "base.components", "base.restarts",
      "kernel.amplitude", "kernel.lengthscales", "mean.mu0",
      "learn.kernel", "learn.base", "learn.mean",
      "gibbs.samples", "gibbs.burn_in", "gibbs.hyper_interval", "gibbs.mh_step",
      "gibbs.max_stored_values", "gibbs.amplitude_range", "gibbs.lengthscale_range",
      "vb.inducing", "vb.integration_points", "vb.tol", "vb.max_iters", "vb.learning_rate",
      "vb.beta1", "vb.beta2", "vb.epsilon", "vb.hyper_interval", "vb.fd_step",
      "kde.bandwidths", "kde.folds", "gmm.components", "gmm.folds", "gmm.restarts",
      "eval.samples", "eval.normalizer_points", "eval.residual_tolerance", "grid.points"};
  return keys;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || trim(text.substr(used)).size() > 0)
    throw UsageError("config: '" + key + "' expects a number, got '" + text + "'");
  return v;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile c;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(number) + ": empty key");
    c.entries_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  return parse(in, path);
}

void ConfigFile::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("override '" + assignment + "' is not key=value");
  entries_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string ConfigFile::get(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::string ConfigFile::require(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty())
    throw UsageError("config: missing required key '" + key + "'");
  return it->second;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_double(key, get(key, "")) : fallback;
}

long ConfigFile::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const double v = parse_double(key, get(key, ""));
  if (v != static_cast<double>(static_cast<long>(v)))
    throw UsageError("config: '" + key + "' expects an integer");
  return static_cast<long>(v);
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  std::string v = get(key, "");
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("config: '" + key + "' expects true/false");
}

std::vector<double> ConfigFile::get_doubles(const std::string& key,
                                            std::vector<double> fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  std::stringstream ss(get(key, ""));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(key, item));
  }
  return out;
}

Method parse_method(const std::string& name) {
  if (name == "gibbs") return Method::Gibbs;
  if (name == "vb") return Method::VB;
  if (name == "kde") return Method::KDE;
  if (name == "gmm") return Method::GMM;
  throw UsageError("unknown method '" + name + "' (expected gibbs, vb, kde or gmm)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Gibbs: return "gibbs";
    case Method::VB: return "vb";
    case Method::KDE: return "kde";
    case Method::GMM: return "gmm";
  }
  return "?";
}

int RunConfig::effective_eval_samples() const {
  if (eval_samples > 0) return eval_samples;
  return method == Method::Gibbs ? 500 : 100;
}

RunConfig run_config_from(const ConfigFile& file) {
  for (const auto& [key, value] : file.entries())
    if (!known_keys().count(key)) throw UsageError("config: unknown key '" + key + "'");

  RunConfig c;
  c.method = parse_method(file.require("method"));
  c.data_path = file.get("data", "");
  c.test_path = file.get("test", "");
  c.output_path = file.get("output", "");
  if (const char* env = std::getenv("GPDENSE_SEED"); env != nullptr && *env != '\0') {
    c.seed = static_cast<std::uint64_t>(parse_double("GPDENSE_SEED", env));
  } else {
    const std::string seed = file.require("seed");
    const double v = parse_double("seed", seed);
    if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
      throw UsageError("config: seed must be a nonnegative integer");
    c.seed = static_cast<std::uint64_t>(v);
  }
  c.whiten = file.get_bool("whiten", true);

  c.base.kind = file.get("base.kind", "standard_normal");
  if (c.base.kind != "standard_normal" && c.base.kind != "diagonal_gaussian" && c.base.kind != "gmm")
    throw UsageError("config: base.kind must be standard_normal, diagonal_gaussian or gmm");
  c.base.mean = file.get_doubles("base.mean", {});
  c.base.scales = file.get_doubles("base.scales", {});
  c.base.components = static_cast<int>(file.get_int("base.components", 3));
  c.base.restarts = static_cast<int>(file.get_int("base.restarts", 10));

  c.amplitude = file.get_double("kernel.amplitude", 1.0);
  c.lengthscales = file.get_doubles("kernel.lengthscales", {1.0});
  c.mu0 = file.get_double("mean.mu0", 0.0);
  if (!(c.amplitude > 0.0) || c.lengthscales.empty() ||
      std::any_of(c.lengthscales.begin(), c.lengthscales.end(), [](double l) { return !(l > 0.0); }))
    throw UsageError("config: kernel amplitude and lengthscales must be positive");

  const bool learn_kernel = file.get_bool("learn.kernel", true);
  const bool learn_base = file.get_bool("learn.base", false);
  const bool learn_mean = file.get_bool("learn.mean", false);

  c.gibbs.n_samples = static_cast<int>(file.get_int("gibbs.samples", 5000));
  c.gibbs.burn_in = static_cast<int>(file.get_int("gibbs.burn_in", 2000));
  c.gibbs.hyper_interval = static_cast<int>(file.get_int("gibbs.hyper_interval", 10));
  c.gibbs.mh_step = file.get_double("gibbs.mh_step", 0.1);
  c.gibbs.max_stored_values = static_cast<std::size_t>(
      file.get_int("gibbs.max_stored_values", static_cast<long>(c.gibbs.max_stored_values)));
  c.gibbs.learn_kernel = learn_kernel;
  const std::vector<double> amp_range = file.get_doubles("gibbs.amplitude_range", {0.05, 5.0});
  const std::vector<double> ls_range = file.get_doubles("gibbs.lengthscale_range", {0.05, 5.0});
  if (amp_range.size() != 2 || ls_range.size() != 2)
    throw UsageError("config: gibbs.*_range takes two values");
  c.gibbs.amplitude_min = amp_range[0];
  c.gibbs.amplitude_max = amp_range[1];
  c.gibbs.lengthscale_min = ls_range[0];
  c.gibbs.lengthscale_max = ls_range[1];
  c.gibbs.learn_base = learn_base;
  c.gibbs.learn_mean = learn_mean;
  c.gibbs.seed = c.seed;
  if (c.gibbs.n_samples < 0 || c.gibbs.burn_in < 0 || c.gibbs.hyper_interval < 1 ||
      !(c.gibbs.mh_step >= 0.0))
    throw UsageError("config: invalid gibbs.* settings");

  c.vb.inducing = static_cast<int>(file.get_int("vb.inducing", 200));
  c.vb.integration_points = static_cast<int>(file.get_int("vb.integration_points", 5000));
  c.vb.tol = file.get_double("vb.tol", 1e-5);
  c.vb.max_iters = static_cast<int>(file.get_int("vb.max_iters", 200));
  c.vb.adam.learning_rate = file.get_double("vb.learning_rate", c.vb.adam.learning_rate);
  c.vb.adam.beta1 = file.get_double("vb.beta1", c.vb.adam.beta1);
  c.vb.adam.beta2 = file.get_double("vb.beta2", c.vb.adam.beta2);
  c.vb.adam.epsilon = file.get_double("vb.epsilon", c.vb.adam.epsilon);
  c.vb.hyper_interval = static_cast<int>(file.get_int("vb.hyper_interval", 1));
  c.vb.fd_step = file.get_double("vb.fd_step", 1e-4);
  c.vb.learn_kernel = learn_kernel;
  c.vb.learn_base = learn_base;
  c.vb.learn_mean = learn_mean;
  c.vb.seed = c.seed;
  if (c.vb.inducing < 2 || c.vb.integration_points < 1 || !(c.vb.tol > 0.0) ||
      c.vb.max_iters < 0 || c.vb.hyper_interval < 1 || !(c.vb.fd_step > 0.0) ||
      !(c.vb.adam.learning_rate >= 0.0))
    throw UsageError("config: invalid vb.* settings");

  c.kde_bandwidths = file.get_doubles("kde.bandwidths", {});
  c.kde_folds = static_cast<int>(file.get_int("kde.folds", 10));
  for (double k : file.get_doubles("gmm.components", {})) {
    if (k < 1 || k != static_cast<double>(static_cast<int>(k)))
      throw UsageError("config: gmm.components must be positive integers");
    c.gmm_components.push_back(static_cast<int>(k));
  }
  c.gmm_folds = static_cast<int>(file.get_int("gmm.folds", 10));
  c.gmm_restarts = static_cast<int>(file.get_int("gmm.restarts", 10));

  c.eval_samples = static_cast<int>(file.get_int("eval.samples", 0));
  c.eval_normalizer_points = static_cast<int>(file.get_int("eval.normalizer_points", 5000));
  c.eval_residual_tolerance = file.get_double("eval.residual_tolerance", 1e-8);
  c.grid_points = static_cast<int>(file.get_int("grid.points", 0));
  if (c.eval_normalizer_points < 1 || c.grid_points < 0 || !(c.eval_residual_tolerance > 0.0))
    throw UsageError("config: invalid eval.* / grid.* settings");
  return c;
}

}  // namespace gpdense::cli
