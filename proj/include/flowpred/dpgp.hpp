// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "flowpred/gp.hpp"
#include "flowpred/trajectory.hpp"

namespace flowpred {

/// A velocity flow field: one GP per derivative channel, trained on the
/// (thinned) derivative samples of its member trajectories.
struct MotionPattern {
  std::string label;                  // majority ground-truth label of members, if known
  std::vector<std::string> members;   // trajectory ids, n_j = members.size()
  std::vector<DerivativeSample> samples;
  GpModel gp_dx;
  GpModel gp_dy;
  Vec2 goal = Vec2::Zero();           // mean endpoint of member trajectories
  // Nominal LRT level of in-pattern windows; +inf when not calibrated.
  double lrt_reference = std::numeric_limits<double>::infinity();

  std::size_t count() const { return members.size(); }

  // Rebuilds both GPs from `samples` with the given hyperparameters.
  void refit(const Hyperparameters& hx, const Hyperparameters& hy);
  void refit() { refit(gp_dx.hyper(), gp_dy.hyper()); }

  double sample_log_density(const DerivativeSample& s) const;
  // Latent posterior variance at q relative to the prior signal variance,
  // averaged over channels: near 0 close to the data, 1 far from it.
  double unexplained_variance(const Vec2& q) const;
  // Sum over samples of the per-channel predictive log densities.
  double log_likelihood(std::span<const DerivativeSample> samples) const;
};

struct Provenance {
  std::string corpus_hash;
  std::uint64_t seed = 0;
  std::size_t sweeps = 0;
};

/// Finite mixture over learned patterns with prior weights p(b_j).
struct MixtureModel {
  std::vector<MotionPattern> patterns;
  std::vector<double> priors;
  double alpha = 1.0;
  Provenance provenance;

  std::size_t size() const { return patterns.size(); }
  // Priors proportional to member counts.
  void reset_priors_from_counts();
  // Throws DataError when priors are not a distribution over the patterns.
  void validate() const;
  // Index of the pattern with the given label, or size() when absent.
  std::size_t find_label(const std::string& label) const;
};

struct DpgpConfig {
  std::size_t sweeps = 100;
  std::uint64_t seed = 1;
  double alpha = 1.0;          // initial concentration
  double alpha_shape = 1.0;    // Gamma prior on alpha (shape, rate)
  double alpha_rate = 1.0;
  bool resample_alpha = true;
  bool optimize_hyper = true;
  std::size_t hyper_iterations = 20;
  // Pattern samples difference positions this many observations apart; 1
  // uses the per-step derivatives directly.
  std::size_t derivative_lag = 10;
  std::size_t max_pattern_points = 400;
  Hyperparameters new_pattern_hyper{};
  // Length scales are kept at the scale of walkways; shorter ones let a mixed
  // cluster explain opposing flows as white noise. The signal variance cap
  // matters where the data barely spans one axis and sf2 is unidentified.
  HyperBounds hyper_bounds{1.0, 20.0, 1e-6, 4.0};
  // Score a fresh cluster by the joint prior marginal of the trajectory
  // instead of a product of independent prior densities.
  bool joint_new_likelihood = true;
  // Hyperparameter ascent on the final patterns.
  std::size_t final_hyper_iterations = 100;
};

struct ClusterState {
  std::vector<std::size_t> assignments;  // trajectory index -> pattern index
  double alpha = 1.0;
  std::uint64_t rng_seed = 0;
};

/// Forward differences over every `lag`-th point (the last point is kept).
std::vector<DerivativeSample> lagged_samples(const Trajectory& traj, std::size_t lag);

/// Most frequent point label, empty when unlabeled.
std::string majority_label(const Trajectory& traj);

double trajectory_likelihood(const MotionPattern& pattern, std::span<const DerivativeSample> samples);

/// CRP-weighted assignment distribution for an unassigned trajectory. Entry j
/// (j < M) is proportional to l_j * n_j / (N - 1 + alpha); entry M to
/// l_new * alpha / (N - 1 + alpha), where N counts the trajectory itself.
std::vector<double> assignment_probabilities(std::span<const double> log_likelihoods,
                                             std::span<const std::size_t> counts, double log_likelihood_new,
                                             double alpha);

/// Auxiliary-variable Gibbs update of the concentration under a
/// Gamma(shape, rate) prior given M clusters over N items.
double resample_alpha(double alpha, std::size_t m, std::size_t n, std::mt19937_64& rng, double shape = 1.0,
                      double rate = 1.0);

/// Collapsed-style Gibbs sampler over trajectory-to-pattern assignments.
class DpgpSampler {
 public:
  DpgpSampler(std::span<const Trajectory> trajectories, const DpgpConfig& config);

  // Sequential CRP seating in a shuffled order.
  void initialize();
  void sweep();
  void run();

  const ClusterState& state() const { return state_; }
  std::size_t cluster_count() const { return clusters_.size(); }
  // Current clusters with hyperparameters optimized to convergence.
  MixtureModel model() const;

 private:
  struct Cluster {
    std::vector<std::size_t> members;  // trajectory indices
    MotionPattern pattern;
  };

  void rebuild(Cluster& c) const;
  void place(std::size_t i);
  double new_pattern_log_likelihood(std::size_t i) const;

  std::span<const Trajectory> trajectories_;
  DpgpConfig config_;
  std::vector<std::vector<DerivativeSample>> samples_;
  std::vector<Cluster> clusters_;
  ClusterState state_;
  std::mt19937_64 rng_;
};

MixtureModel cluster_batch(std::span<const Trajectory> trajectories, const DpgpConfig& config);

/// One pattern per majority label, hyperparameters optimized with the
/// config's bounds and final_hyper_iterations. Throws DataError when a
/// trajectory is unlabeled.
MixtureModel fit_labeled(std::span<const Trajectory> trajectories, const DpgpConfig& config);

/// Builds a single pattern from the lagged samples of `trajectories`, capped.
MotionPattern build_pattern(std::span<const Trajectory> trajectories, std::size_t lag, std::size_t cap,
                            const Hyperparameters& hx, const Hyperparameters& hy);

}  // namespace flowpred
