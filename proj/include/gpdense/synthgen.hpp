#pragma once

#include <Eigen/Dense>

#include "gpdense/base_measure.hpp"
#include "gpdense/kernel.hpp"
#include "gpdense/random.hpp"

namespace gpdense {

/// A GP path revealed one location at a time. Every new value is drawn from
/// the GP conditional given all values revealed so far, so the joint law of
/// the revealed values is the GP prior (with a 1e-8 relative nugget).
class LazyGP {
 public:
  LazyGP(KernelParams params, double mu0);
  /// A path already pinned to `values` at the rows of `locations`.
  static LazyGP conditioned(KernelParams params, double mu0, const Eigen::MatrixXd& locations,
                            const Eigen::VectorXd& values);

  /// g(x); repeated queries at a visited location return the stored value.
  double eval(const Eigen::Ref<const Eigen::VectorXd>& x, Rng& rng);

  Eigen::Index size() const { return n_; }
  Eigen::MatrixXd locations() const { return x_.topRows(n_); }
  Eigen::VectorXd values() const { return g_.head(n_); }
  const KernelParams& params() const { return params_; }
  double mu0() const { return mu0_; }

 private:
  void append(const Eigen::Ref<const Eigen::VectorXd>& x, double g, const Eigen::VectorXd& row,
              double pivot);

  KernelParams params_;
  double mu0_;
  double nugget_;
  Eigen::MatrixXd x_;
  Eigen::VectorXd g_;
  Eigen::MatrixXd l_;
  Eigen::VectorXd w_;  // L^{-1} (g - mu0)
  Eigen::Index n_ = 0;
};

struct GeneratedData {
  Dataset data;
  Eigen::VectorXd data_g;
  /// Proposals thinned out by the rejection step, with g there.
  Eigen::MatrixXd rejected;
  Eigen::VectorXd rejected_g;
  /// Unit-rate proposal clock at the last acceptance; Gamma(N, Z(g)) distributed.
  double arrival_time = 0.0;
  Eigen::Index proposals = 0;
};

/// Draws `n` exact samples from rho(x | g) = sigma(g(x)) pi(x) / Z for the path
/// `gp` by rejection: x* ~ pi accepted with probability sigma(g(x*)).
GeneratedData draw_from_path(LazyGP& gp, const BaseMeasure& base, Eigen::Index n, Rng& rng);

struct GeneratedModel {
  GeneratedData sample;
  LazyGP gp;
};

/// Draws g from the GP prior lazily and `n` points from the induced density.
GeneratedModel generate_dataset(const KernelParams& kernel, double mu0, const BaseMeasure& base,
                                Eigen::Index n, Rng& rng);

/// n points at uniform angle on a circle plus isotropic Gaussian noise.
Eigen::MatrixXd circle_points(Eigen::Index n, double radius, double noise, Rng& rng);

}  // namespace gpdense
