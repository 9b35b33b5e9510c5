// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "flowpred/common.hpp"
#include "flowpred/trajectory.hpp"

namespace flowpred {

enum class Channel { dx, dy };

/// Squared-exponential kernel with one length scale per input axis, plus
/// i.i.d. observation noise on the derivative targets.
struct Hyperparameters {
  double length_scale_x = 2.0;   // m
  double length_scale_y = 2.0;   // m
  double signal_variance = 0.5;  // (m/s)^2
  double noise_variance = 0.1;   // (m/s)^2

  void validate() const;
  // (log l_x, log l_y, log sf2, log sn2)
  Eigen::Vector4d to_log() const;
  static Hyperparameters from_log(const Eigen::Vector4d& theta);

  bool operator==(const Hyperparameters&) const = default;
};

/// Box constraints for the log-space optimizer.
struct HyperBounds {
  double length_min = 1e-2, length_max = 1e3;
  double signal_min = 1e-6, signal_max = 1e3;
  double noise_min = 1e-8, noise_max = 1e2;

  Eigen::Vector4d lower_log() const;
  Eigen::Vector4d upper_log() const;
};

struct PosteriorPoint {
  double mean = 0.0;
  double variance = 0.0;
};

double kernel_eval(const Vec2& p, const Vec2& q, const Hyperparameters& h);

/// Exact GP regression with zero prior mean. Immutable once constructed; the
/// Cholesky factor of K(X,X) + sn2*I (+ jitter) is cached.
class GpModel {
 public:
  using Inputs = Eigen::Matrix<double, Eigen::Dynamic, 2>;

  // Prior GP, no data.
  explicit GpModel(const Hyperparameters& hyper = {});
  GpModel(Inputs inputs, Eigen::VectorXd targets, const Hyperparameters& hyper);

  std::size_t size() const { return static_cast<std::size_t>(inputs_.rows()); }
  const Inputs& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  const Hyperparameters& hyper() const { return hyper_; }
  double jitter() const { return jitter_; }

  PosteriorPoint predict(const Vec2& q) const;
  double predict_mean(const Vec2& q) const;
  // Central differences, step 1e-4 * length scale per axis.
  Vec2 mean_gradient(const Vec2& q) const;
  double log_predictive_density(const Vec2& q, double target) const;

  /// Joint predictive log density of noisy targets at `locations`:
  /// N(targets; mu(S), K(S,S) + sn2 I - K(X,S)^T (K(X,X)+sn2 I)^-1 K(X,S)).
  double log_joint_likelihood(const Inputs& locations, const Eigen::VectorXd& targets) const;

  /// Log evidence log p(y | X, theta) and its gradient with respect to the
  /// log-domain hyperparameters (see Hyperparameters::to_log).
  std::pair<double, Eigen::Vector4d> log_marginal_likelihood() const;
  double log_evidence() const;

 private:
  Eigen::VectorXd cross_kernel(const Vec2& q) const;

  Inputs inputs_;
  Eigen::VectorXd targets_;
  Hyperparameters hyper_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

/// Gram matrix K(A,B) without noise.
Eigen::MatrixXd gram(const GpModel::Inputs& a, const GpModel::Inputs& b, const Hyperparameters& h);

/// Factorizes `matrix` after adding jitter to the diagonal if needed: first
/// 0, then 1e-8 * scale, growing x10 per retry for up to 10 retries. Returns
/// the jitter used. Throws NumericalError when all retries fail.
double factorize_with_jitter(Eigen::MatrixXd matrix, double scale, Eigen::LLT<Eigen::MatrixXd>& llt);

GpModel::Inputs sample_locations(std::span<const DerivativeSample> samples);
Eigen::VectorXd sample_targets(std::span<const DerivativeSample> samples, Channel channel);

/// Throws DataError for an empty sample set.
GpModel gp_fit(std::span<const DerivativeSample> samples, Channel channel, const Hyperparameters& hyper);

struct OptimizerOptions {
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-5;
  // Stop once an accepted step improves the evidence by less than this.
  double min_improvement = 0.0;
  std::size_t max_halvings = 40;
  HyperBounds bounds{};
};

struct OptimizerResult {
  Hyperparameters hyper;
  double initial_evidence = 0.0;
  double evidence = 0.0;
  std::size_t iterations = 0;
};

/// Projected gradient ascent on the log evidence in log-hyperparameter space
/// with a step-halving line search. Never returns worse evidence than `init`
/// (after clamping `init` into the bounds).
OptimizerResult optimize_hyperparameters_detailed(const GpModel::Inputs& inputs, const Eigen::VectorXd& targets,
                                                  const Hyperparameters& init, const OptimizerOptions& options = {});

/// Requires at least 2 samples.
Hyperparameters optimize_hyperparameters(std::span<const DerivativeSample> samples, Channel channel,
                                         const Hyperparameters& init, const OptimizerOptions& options = {});

}  // namespace flowpred
