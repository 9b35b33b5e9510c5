// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowpred/behavior.hpp"
#include "flowpred/eval.hpp"
#include "flowpred/planner.hpp"

namespace flowpred {

struct BoxSpec {
  Vec2 center = Vec2::Zero();
  Vec2 half_size = Vec2::Ones();
};

struct TrainingSpec {
  std::vector<std::string> behaviors;
  std::size_t per_behavior = 5;
  std::uint64_t seed = 1;
  // "dpgp" clusters the corpus; "labeled" fits one pattern per behavior.
  std::string mode = "dpgp";
  std::size_t sweeps = 100;
  std::uint64_t cluster_seed = 1;
};

struct AgentSpec {
  std::string id;
  std::string behavior;
  double start_time = 0.0;
  std::optional<IntentSwitch> intent_switch;
};

struct RoverSpec {
  Vec2 start = Vec2::Zero();
  double start_time = 0.0;
  std::vector<Vec2> goals;
  double goal_half_size = 0.5;
  bool loop_goals = false;
  // Without the planner the rover drives straight at v_max through every goal.
  bool planner = true;
};

struct SimPlannerSpec {
  PlannerConfig config;
  std::size_t horizon = 100;     // fan steps
  double replan_period = 1.0;    // s
  double agent_half_size = 0.5;  // m, obstacle box around each agent
  double inflation = 0.25;       // m, vehicle radius added to every obstacle
};

struct Scenario {
  std::string name;
  Bounds world;
  std::vector<BoxSpec> static_obstacles;
  std::map<std::string, BehaviorScript> behaviors;
  TrainingSpec training;
  std::vector<AgentSpec> agents;
  RoverSpec rover;
  SimPlannerSpec planner;
  OnlineConfig online;
  double collision_radius = 0.5;
  std::uint64_t seed = 1;
  double duration = 60.0;
  double dt = 0.1;

  // Throws ConfigError for unknown behaviors, out-of-bounds waypoints, starts
  // or goals, and bad numeric values.
  void validate() const;
  World planning_world() const;
};

/// Reads the JSON scenario document; unknown keys are rejected.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");

/// Synthetic training corpus of the scenario (labels kept).
std::vector<Trajectory> training_corpus(const Scenario& scenario);

/// Mixture the scenario's agents are classified against, with LRT references
/// calibrated on the training corpus.
MixtureModel train_scenario(const Scenario& scenario);

struct SimEvent {
  double time = 0.0;
  std::string agent;
  EventKind kind = EventKind::none;
  std::size_t patterns = 0;  // mixture size after the event
};

struct SimReport {
  std::size_t collisions = 0;
  std::size_t goals_reached = 0;
  double min_separation = 0.0;
  std::size_t steps = 0;
  std::size_t replans = 0;
  std::size_t patterns_start = 0;
  std::size_t patterns_end = 0;
  std::vector<SimEvent> events;
  // Per-step risk of every executed plan state against the fans it was
  // planned with.
  double max_planned_step_risk = 0.0;
};

struct SimLogs {
  std::ostream* steps = nullptr;   // CSV, one row per step and agent
  std::ostream* events = nullptr;  // NDJSON
  std::ostream* info = nullptr;    // warnings
};

/// Fixed-step closed loop. `mixture` is copied; patterns learned online stay
/// inside the run. Deterministic in (scenario, mixture, seed).
SimReport run_closed_loop(const Scenario& scenario, const MixtureModel& mixture, std::uint64_t seed,
                          const SimLogs& logs = {});

void write_report_json(std::ostream& out, const SimReport& report, std::uint64_t seed);

}  // namespace flowpred
