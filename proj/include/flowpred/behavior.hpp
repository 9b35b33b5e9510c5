// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowpred/common.hpp"
#include "flowpred/trajectory.hpp"

namespace flowpred {

/// Mid-route change of plan: from `time` on, the agent heads for `waypoints`
/// starting from wherever it is.
struct IntentSwitch {
  double time = 0.0;  // seconds since the agent started
  std::vector<Vec2> waypoints;
  std::string label;
};

struct BehaviorScript {
  std::string label;
  std::vector<Vec2> waypoints;
  double speed = 0.8;            // m/s
  double position_noise = 0.05;  // m, std of each recorded coordinate
  double heading_jitter = 0.1;   // rad, std per step
  bool cyclic = false;           // route closes back to the first waypoint
  std::optional<IntentSwitch> intent_switch;

  void validate() const;
};

/// Kinematic state of one scripted agent.
class ScriptedAgent {
 public:
  ScriptedAgent(const BehaviorScript& script, std::uint64_t seed);

  // Advances one step of length dt; returns false once the route is done.
  bool step(double dt);
  // Noisy observation of the current position.
  Vec2 observe();

  const Vec2& position() const { return position_; }
  double elapsed() const { return elapsed_; }
  bool finished() const { return finished_; }
  const std::string& label() const { return label_; }
  // Completed laps of a cyclic route.
  std::size_t cycles() const { return cycles_; }

 private:
  BehaviorScript script_;
  std::vector<Vec2> route_;
  std::size_t next_ = 1;
  Vec2 position_;
  double elapsed_ = 0.0;
  bool finished_ = false;
  bool switched_ = false;
  std::string label_;
  std::size_t cycles_ = 0;
  std::mt19937_64 rng_;
};

/// n independent noisy traversals sampled every `period` seconds. Cyclic
/// scripts yield one lap per trajectory. Points carry the active label.
std::vector<Trajectory> generate_synthetic(const BehaviorScript& script, std::size_t n, std::uint64_t seed,
                                           double period = 0.1, const std::string& id_prefix = "");

}  // namespace flowpred
