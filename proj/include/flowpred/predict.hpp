// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "flowpred/dpgp.hpp"

namespace flowpred {

struct GaussianStep {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
};

/// One weighted sequence of a fan. pattern is -1 for non-pattern branches
/// (constant-velocity fallback).
struct FanBranch {
  int pattern = -1;
  double weight = 1.0;
  std::vector<GaussianStep> steps;
};

struct PredictionFan {
  std::vector<FanBranch> branches;
  double dt = 0.1;
  Vec2 origin = Vec2::Zero();

  std::size_t horizon() const { return branches.empty() ? 0 : branches.front().steps.size(); }
  // Weighted mean position after k+1 steps.
  Vec2 mean(std::size_t k) const;
  // Throws DataError when weights do not sum to 1 or lengths differ.
  void validate() const;
};

/// Linearized moment propagation through the pattern's flow field. Element k
/// is the position distribution k+1 steps after `start`.
std::vector<GaussianStep> propagate(const MotionPattern& pattern, const Vec2& start, std::size_t k, double dt);

/// Monte-Carlo reference: particles advance with velocities drawn from the
/// GP predictive at their own positions.
std::vector<GaussianStep> propagate_particles(const MotionPattern& pattern, const Vec2& start, std::size_t k,
                                              double dt, std::size_t particles, std::uint64_t seed);

/// Straight-line motion; covariance grows by dt^2 * growth * I per step.
std::vector<GaussianStep> baseline_constant_velocity(const Vec2& start, const Vec2& velocity, std::size_t k,
                                                     double dt, double growth);

/// One branch per pattern weighted by the posterior; weights below `prune`
/// are dropped and the rest renormalized.
PredictionFan mixture_predict(const MixtureModel& mixture, std::span<const double> posterior, const Vec2& start,
                              std::size_t k, double dt, double prune = 1e-4);

PredictionFan constant_velocity_fan(const Vec2& start, const Vec2& velocity, std::size_t k, double dt,
                                    double growth);

double rms_error(const PredictionFan& fan, std::span<const Vec2> truth);

double correct_pattern_probability(std::span<const double> posterior, std::size_t true_pattern);

/// Heading-based goal inference: goals persist between steps with
/// probability 1 - switch_prob, and an observed heading has Gaussian angular
/// error around the bearing to the goal.
struct GoalDirectedConfig {
  double heading_sigma = 0.5;  // rad
  double switch_prob = 0.01;
  double min_speed = 0.1;      // slower samples carry no heading
};

class GoalDirectedTracker {
 public:
  GoalDirectedTracker(std::vector<Vec2> goals, std::vector<double> priors, const GoalDirectedConfig& config = {});

  void update(const DerivativeSample& s);
  const std::vector<double>& posterior() const { return posterior_; }
  const std::vector<Vec2>& goals() const { return goals_; }

  // Straight lines toward each goal at `speed`, stopping on arrival.
  PredictionFan predict(const Vec2& start, double speed, std::size_t k, double dt, double growth) const;

 private:
  std::vector<Vec2> goals_;
  std::vector<double> posterior_;
  GoalDirectedConfig config_;
};

/// `step,pattern,weight,mean_x,mean_y,cov_xx,cov_xy,cov_yy`, steps counted from 1.
void write_prediction_csv(std::ostream& out, const PredictionFan& fan, bool header = true);

}  // namespace flowpred
