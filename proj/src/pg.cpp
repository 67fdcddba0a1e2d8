#include "gpdense/pg.hpp"

#include <cmath>
#include <numbers>

#include "gpdense/special.hpp"

namespace gpdense {
namespace {

constexpr double kTrunc = 0.64;
constexpr double kPi = std::numbers::pi;

// n-th term of the alternating series for the J*(1, 0) density at x.
double series_term(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double expnt = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                       2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(expnt);
}

// Probability of proposing from the exponential tail piece.
double exponential_mass(double z) {
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double root = std::sqrt(1.0 / kTrunc);
  const double b = root * (kTrunc * z - 1.0);
  const double a = -root * (kTrunc * z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - z + log_normal_cdf(b);
  const double xa = x0 + z + log_normal_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian IG(1/z, 1) truncated to (0, kTrunc).
double truncated_inverse_gaussian(double z, Rng& rng) {
  double x = kTrunc + 1.0;
  if (1.0 / kTrunc > z) {
    double alpha = 0.0;
    while (uniform01(rng) > alpha) {
      double e1 = standard_exponential(rng);
      double e2 = standard_exponential(rng);
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = standard_exponential(rng);
        e2 = standard_exponential(rng);
      }
      x = 1.0 + e1 * kTrunc;
      x = kTrunc / (x * x);
      alpha = std::exp(-0.5 * z * z * x);
    }
  } else {
    const double mu = 1.0 / z;
    while (x > kTrunc) {
      double y = standard_normal(rng);
      y *= y;
      const double half_mu = 0.5 * mu;
      const double mu_y = mu * y;
      x = mu + half_mu * mu_y - half_mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
      if (uniform01(rng) > mu / (mu + x)) x = mu * mu / x;
    }
  }
  return x;
}

}  // namespace

double pg_mean(int b, double c) {
  const double ac = std::abs(c);
  if (ac < 1e-8) return b / 4.0 - b * c * c / 48.0;
  return b * std::tanh(0.5 * ac) / (2.0 * ac);
}

double sample_pg1(double c, Rng& rng) {
  // PG(1, c) = J*(1, c/2) / 4.
  const double z = 0.5 * std::abs(c);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double p_exp = exponential_mass(z);
  while (true) {
    double x;
    if (uniform01(rng) < p_exp)
      x = kTrunc + standard_exponential(rng) / fz;
    else
      x = truncated_inverse_gaussian(z, rng);

    double s = series_term(0, x);
    const double y = uniform01(rng) * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_term(n, x);
        if (y <= s) return 0.25 * x;
      } else {
        s += series_term(n, x);
        if (y > s) break;
      }
    }
  }
}

Eigen::VectorXd sample_pg1(const Eigen::Ref<const Eigen::VectorXd>& tilts, Rng& rng) {
  Eigen::VectorXd out(tilts.size());
  for (Eigen::Index i = 0; i < tilts.size(); ++i) out(i) = sample_pg1(tilts(i), rng);
  return out;
}

double sigmoid_mixture_integrand(double omega, double z) {
  return std::exp(0.5 * z - 0.5 * z * z * omega - std::numbers::ln2);
}

}  // namespace gpdense
