// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "flowpred/predict.hpp"

namespace flowpred {

struct VehicleState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double time = 0.0;
};

struct Halfspace {
  Vec2 normal = Vec2::UnitX();  // unit length
  double offset = 0.0;          // interior: normal . x <= offset
};

struct Polytope {
  std::vector<Halfspace> faces;

  static Polytope box(const Vec2& center, const Vec2& half_size);
  bool contains(const Vec2& p) const;
  Polytope translated(const Vec2& d) const;
  // Every face pushed outward by `margin`.
  Polytope inflated(double margin) const;
  void validate() const;
};

struct Bounds {
  Vec2 lo = Vec2::Zero();
  Vec2 hi = Vec2::Zero();

  bool contains(const Vec2& p) const;
};

struct World {
  Bounds bounds;
  std::vector<Polytope> statics;  // already inflated by the vehicle radius
};

/// A shape centered on an uncertain position. steps[k] is the distribution
/// at time t0 + (k+1)*dt; before t0 + dt the origin is used with zero
/// covariance, after the last step the last mean is held and the covariance
/// keeps growing by dt^2 * beyond_growth per step.
struct ProbabilisticObstacle {
  Polytope shape;  // relative to the obstacle position
  std::vector<GaussianStep> steps;
  Vec2 origin = Vec2::Zero();
  double likelihood = 1.0;
  double t0 = 0.0;
  double dt = 0.1;
  double beyond_growth = 0.0;

  GaussianStep at(double t) const;
};

/// One obstacle per fan branch, weighted by the branch weight.
std::vector<ProbabilisticObstacle> obstacles_from_fan(const PredictionFan& fan, double t0, const Polytope& shape,
                                                      double beyond_growth);

/// Likelihood-scaled bound on P(position inside the obstacle at time t):
/// the smallest per-face Gaussian tail probability.
double collision_risk(const Vec2& position, const ProbabilisticObstacle& obstacle, double t);

struct RiskConfig {
  double delta_s = 0.9;
  double delta_p = 0.5;

  void validate() const;
};

struct PlannerConfig {
  RiskConfig risk;
  std::size_t budget = 2000;   // tree growth iterations
  double goal_bias = 0.1;
  double max_extension = 2.5;  // m
  double v_max = 1.0;
  double a_max = 1.0;
  double dt = 0.1;
  // New nodes must stay feasible while stopped this long after arrival.
  double hold_time = 2.0;
  double wait_probability = 0.3;
  double max_wait = 3.0;

  void validate() const;
};

struct TreeNode {
  VehicleState state;
  int parent = -1;
  std::vector<VehicleState> segment;  // dense states after the parent, ending at this node
  std::vector<double> segment_risk;   // total obstacle risk per segment state
  double path_risk = 0.0;             // accumulated over every state from the root
};

struct Tree {
  std::vector<TreeNode> nodes;
};

double total_risk(const Vec2& position, double t, std::span<const ProbabilisticObstacle> obstacles);

/// Static containment plus the per-step chance constraint.
bool state_feasible(const Vec2& position, double t, const World& world,
                    std::span<const ProbabilisticObstacle> obstacles, const RiskConfig& risk);

/// Throws DataError when the root itself is infeasible.
Tree grow_tree(const VehicleState& root, const World& world, std::span<const ProbabilisticObstacle> obstacles,
               const Polytope& goal, const PlannerConfig& config, std::uint64_t seed);

struct Path {
  std::vector<VehicleState> states;  // dense, starting at the root
  std::vector<double> step_risk;
  std::vector<double> accumulated_risk;
  bool partial = false;

  double duration() const { return states.empty() ? 0.0 : states.back().time - states.front().time; }
};

/// Fastest root-to-goal path; otherwise the path to the node nearest the goal
/// centroid, flagged partial.
Path best_path(const Tree& tree, const Polytope& goal);

/// Rest-to-rest straight-line motion under the speed and acceleration limits,
/// sampled every dt after `from` (exclusive) until stopped at `to`.
std::vector<VehicleState> steer(const VehicleState& from, const Vec2& to, const PlannerConfig& config);

/// `t,x,y,vx,vy,step_risk,accumulated_risk`
void write_plan_csv(std::ostream& out, const Path& path);

}  // namespace flowpred
