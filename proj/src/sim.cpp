// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace flowpred {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

Vec2 vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(where + " must be a [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2> vec2_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be a list of [x, y] pairs");
  std::vector<Vec2> out;
  for (const auto& e : j) out.push_back(vec2(e, where));
  return out;
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

IntentSwitch parse_switch(const json& j, const std::string& where) {
  check_keys(j, {"time", "waypoints", "label"}, where);
  IntentSwitch s;
  read(j, "time", s.time);
  if (!j.contains("waypoints")) throw ConfigError(where + " needs waypoints");
  s.waypoints = vec2_list(j.at("waypoints"), where + ".waypoints");
  read(j, "label", s.label);
  return s;
}

BehaviorScript parse_behavior(const std::string& name, const json& j) {
  const std::string where = "behaviors." + name;
  check_keys(j, {"waypoints", "speed", "position_noise", "heading_jitter", "cyclic"}, where);
  BehaviorScript b;
  b.label = name;
  if (!j.contains("waypoints")) throw ConfigError(where + " needs waypoints");
  b.waypoints = vec2_list(j.at("waypoints"), where + ".waypoints");
  read(j, "speed", b.speed);
  read(j, "position_noise", b.position_noise);
  read(j, "heading_jitter", b.heading_jitter);
  read(j, "cyclic", b.cyclic);
  return b;
}

void parse_online(const json& j, OnlineConfig& o) {
  check_keys(j, {"changepoint", "window", "m", "eta", "novelty_commit_steps", "derivative_lag", "support",
                 "max_pattern_points", "hyper_iterations"},
             "online");
  read(j, "changepoint", o.changepoint);
  read(j, "window", o.lrt.window);
  read(j, "m", o.lrt.m);
  read(j, "eta", o.lrt.eta);
  read(j, "novelty_commit_steps", o.novelty_commit_steps);
  read(j, "derivative_lag", o.derivative_lag);
  read(j, "support", o.support);
  read(j, "max_pattern_points", o.max_pattern_points);
  read(j, "hyper_iterations", o.hyper_iterations);
}

void parse_planner(const json& j, SimPlannerSpec& p) {
  check_keys(j, {"delta_s", "delta_p", "budget", "goal_bias", "max_extension", "v_max", "a_max", "hold_time",
                 "wait_probability", "max_wait", "horizon", "replan_period", "agent_half_size", "inflation"},
             "planner");
  read(j, "delta_s", p.config.risk.delta_s);
  read(j, "delta_p", p.config.risk.delta_p);
  read(j, "budget", p.config.budget);
  read(j, "goal_bias", p.config.goal_bias);
  read(j, "max_extension", p.config.max_extension);
  read(j, "v_max", p.config.v_max);
  read(j, "a_max", p.config.a_max);
  read(j, "hold_time", p.config.hold_time);
  read(j, "wait_probability", p.config.wait_probability);
  read(j, "max_wait", p.config.max_wait);
  read(j, "horizon", p.horizon);
  read(j, "replan_period", p.replan_period);
  read(j, "agent_half_size", p.agent_half_size);
  read(j, "inflation", p.inflation);
}

struct LiveAgent {
  const AgentSpec* spec = nullptr;
  std::unique_ptr<ScriptedAgent> body;
  std::unique_ptr<AgentTracker> tracker;
  bool started = false;
  bool done = false;
};

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void Scenario::validate() const {
  if (!(world.hi.x() > world.lo.x() && world.hi.y() > world.lo.y())) throw ConfigError("world bounds are empty");
  if (!(dt > 0.0 && duration > 0.0)) throw ConfigError("dt and duration must be positive");
  if (!(collision_radius > 0.0)) throw ConfigError("collision radius must be positive");
  online.validate();
  planner.config.validate();
  if (planner.horizon < 1 || !(planner.replan_period > 0.0)) throw ConfigError("planner horizon and period must be positive");
  for (const auto& [name, b] : behaviors) {
    b.validate();
    for (const auto& w : b.waypoints) {
      if (!world.contains(w)) throw ConfigError("behavior " + name + " has a waypoint outside the world");
    }
  }
  auto known = [&](const std::string& b) {
    if (!behaviors.count(b)) throw ConfigError("unknown behavior '" + b + "'");
  };
  for (const auto& b : training.behaviors) known(b);
  if (training.mode != "dpgp" && training.mode != "labeled") {
    throw ConfigError("training mode must be dpgp or labeled");
  }
  if (training.behaviors.empty() || training.per_behavior < 1) throw ConfigError("training corpus is empty");
  for (const auto& a : agents) {
    known(a.behavior);
    if (a.intent_switch) {
      for (const auto& w : a.intent_switch->waypoints) {
        if (!world.contains(w)) throw ConfigError("agent " + a.id + " switches to a waypoint outside the world");
      }
    }
  }
  if (!world.contains(rover.start)) throw ConfigError("rover starts outside the world");
  for (const auto& g : rover.goals) {
    if (!world.contains(g)) throw ConfigError("rover goal outside the world");
  }
}

World Scenario::planning_world() const {
  World w;
  w.bounds = world;
  for (const auto& b : static_obstacles) w.statics.push_back(Polytope::box(b.center, b.half_size).inflated(planner.inflation));
  return w;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  try {
    check_keys(j, {"name", "world", "static_obstacles", "behaviors", "training", "agents", "rover", "planner",
                   "online", "collision_radius", "seed", "duration", "dt"},
               source);
    Scenario s;
    read(j, "name", s.name);
    if (!j.contains("world")) throw ConfigError(source + ": missing world");
    check_keys(j.at("world"), {"lo", "hi"}, "world");
    s.world.lo = vec2(j.at("world").at("lo"), "world.lo");
    s.world.hi = vec2(j.at("world").at("hi"), "world.hi");
    if (j.contains("static_obstacles")) {
      for (const auto& o : j.at("static_obstacles")) {
        check_keys(o, {"center", "half_size"}, "static_obstacles");
        s.static_obstacles.push_back({vec2(o.at("center"), "center"), vec2(o.at("half_size"), "half_size")});
      }
    }
    if (!j.contains("behaviors")) throw ConfigError(source + ": missing behaviors");
    for (const auto& [name, b] : j.at("behaviors").items()) s.behaviors[name] = parse_behavior(name, b);
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t, {"behaviors", "per_behavior", "seed", "mode", "sweeps", "cluster_seed"}, "training");
      read(t, "behaviors", s.training.behaviors);
      read(t, "per_behavior", s.training.per_behavior);
      read(t, "seed", s.training.seed);
      read(t, "mode", s.training.mode);
      read(t, "sweeps", s.training.sweeps);
      read(t, "cluster_seed", s.training.cluster_seed);
    }
    if (j.contains("agents")) {
      for (const auto& a : j.at("agents")) {
        check_keys(a, {"id", "behavior", "start_time", "switch"}, "agents");
        AgentSpec spec;
        read(a, "id", spec.id);
        read(a, "behavior", spec.behavior);
        read(a, "start_time", spec.start_time);
        if (a.contains("switch")) spec.intent_switch = parse_switch(a.at("switch"), "agents." + spec.id + ".switch");
        if (spec.id.empty()) spec.id = "agent" + std::to_string(s.agents.size());
        s.agents.push_back(std::move(spec));
      }
    }
    if (j.contains("rover")) {
      const auto& r = j.at("rover");
      check_keys(r, {"start", "start_time", "goals", "goal_half_size", "loop_goals", "planner"}, "rover");
      if (r.contains("start")) s.rover.start = vec2(r.at("start"), "rover.start");
      read(r, "start_time", s.rover.start_time);
      if (r.contains("goals")) s.rover.goals = vec2_list(r.at("goals"), "rover.goals");
      read(r, "goal_half_size", s.rover.goal_half_size);
      read(r, "loop_goals", s.rover.loop_goals);
      read(r, "planner", s.rover.planner);
    }
    if (j.contains("planner")) parse_planner(j.at("planner"), s.planner);
    if (j.contains("online")) parse_online(j.at("online"), s.online);
    read(j, "collision_radius", s.collision_radius);
    read(j, "seed", s.seed);
    read(j, "duration", s.duration);
    read(j, "dt", s.dt);
    s.planner.config.dt = s.dt;
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

std::vector<Trajectory> training_corpus(const Scenario& scenario) {
  std::mt19937_64 seeder(scenario.training.seed);
  std::vector<Trajectory> out;
  for (const auto& name : scenario.training.behaviors) {
    auto t = generate_synthetic(scenario.behaviors.at(name), scenario.training.per_behavior, seeder(), scenario.dt);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

MixtureModel train_scenario(const Scenario& scenario) {
  const auto corpus = training_corpus(scenario);
  DpgpConfig cfg;
  cfg.sweeps = scenario.training.sweeps;
  cfg.seed = scenario.training.cluster_seed;
  cfg.derivative_lag = scenario.online.derivative_lag;
  cfg.max_pattern_points = scenario.online.max_pattern_points;
  MixtureModel m = scenario.training.mode == "labeled" ? fit_labeled(corpus, cfg) : cluster_batch(corpus, cfg);
  calibrate_references(m, corpus, scenario.online);
  return m;
}

SimReport run_closed_loop(const Scenario& scenario, const MixtureModel& mixture, std::uint64_t seed,
                          const SimLogs& logs) {
  scenario.validate();
  mixture.validate();
  MixtureModel mix = mixture;
  SimReport report;
  report.patterns_start = mix.size();
  report.min_separation = std::numeric_limits<double>::infinity();

  std::mt19937_64 seeder(seed);
  std::vector<LiveAgent> agents;
  for (const auto& spec : scenario.agents) {
    BehaviorScript script = scenario.behaviors.at(spec.behavior);
    script.intent_switch = spec.intent_switch;
    LiveAgent a;
    a.spec = &spec;
    a.body = std::make_unique<ScriptedAgent>(script, seeder());
    agents.push_back(std::move(a));
  }
  std::mt19937_64 planner_rng(seeder());

  const World world = scenario.planning_world();
  const double dt = scenario.dt;
  const Polytope agent_shape =
      Polytope::box(Vec2::Zero(), Vec2::Constant(scenario.planner.agent_half_size)).inflated(scenario.planner.inflation);
  const auto replan_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(scenario.planner.replan_period / dt)));

  Vec2 rover = scenario.rover.start;
  Path path;
  std::size_t path_base = 0;  // sim step of path.states[0]
  std::size_t goal = 0;
  bool force_replan = true;
  std::size_t rover_steps = 0;
  const auto steps = static_cast<std::size_t>(std::round(scenario.duration / dt));

  auto emit = [&](double t, LiveAgent& a, EventKind kind) {
    report.events.push_back({t, a.spec->id, kind, mix.size()});
    if (logs.events) {
      const auto post = a.tracker ? a.tracker->posterior() : std::vector<double>{};
      const auto set = a.tracker ? a.tracker->model_set() : std::vector<std::size_t>{};
      write_event_record(*logs.events, t, a.spec->id, kind, set, post);
    }
  };
  auto finalize = [&](double t, LiveAgent& a) {
    if (!a.tracker) return;
    if (finalize_trajectory(*a.tracker, mix, scenario.online, logs.info)) emit(t, a, EventKind::novelty_learned);
    a.tracker.reset();
  };
  if (logs.steps) *logs.steps << "t,agent,lap,x,y,rover_x,rover_y,separation,patterns,top_pattern,top_probability,unexplained\n";

  for (std::size_t s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) * dt;

    for (auto& a : agents) {
      if (a.done) continue;
      if (!a.started && t + 1e-9 >= a.spec->start_time) a.started = true;
      if (!a.started) continue;
      if (!a.tracker) a.tracker = std::make_unique<AgentTracker>(a.spec->id, mix, scenario.online);
      const OnlineEvent ev = a.tracker->observe(t, a.body->observe(), mix);
      if (ev.kind != EventKind::none) emit(t, a, ev.kind);
    }

    const bool rover_active = t + 1e-9 >= scenario.rover.start_time && goal < scenario.rover.goals.size();
    if (rover_active) {
      const Vec2 target = scenario.rover.goals[goal];
      if (!scenario.rover.planner) {
        const Vec2 d = target - rover;
        const double step = scenario.planner.config.v_max * dt;
        rover = d.norm() <= step ? target : Vec2(rover + d * (step / d.norm()));
      } else {
        if (force_replan || rover_steps % replan_every == 0) {
          force_replan = false;
          std::vector<ProbabilisticObstacle> obstacles;
          for (auto& a : agents) {
            if (!a.tracker || a.done) continue;
            const auto fan = tracker_fan(*a.tracker, mix, scenario.planner.horizon, dt);
            const auto obs = obstacles_from_fan(fan, t, agent_shape, fallback_growth(mix, fan.origin));
            obstacles.insert(obstacles.end(), obs.begin(), obs.end());
          }
          // Root: the next stopped state of the current plan, or the rover
          // itself once the plan is used up.
          bool extend = !path.states.empty() && s >= path_base && s - path_base + 1 < path.states.size();
          std::size_t keep = 0;
          VehicleState root{rover, Vec2::Zero(), t};
          if (extend) {
            std::size_t i = s - path_base;
            while (i + 1 < path.states.size() && path.states[i].velocity.norm() > 1e-12) ++i;
            keep = i;
            root = path.states[i];
            root.time = static_cast<double>(path_base + i) * dt;
          }
          const Polytope goal_box = Polytope::box(target, Vec2::Constant(scenario.rover.goal_half_size));
          try {
            const Tree tree = grow_tree(root, world, obstacles, goal_box, scenario.planner.config, planner_rng());
            Path next = best_path(tree, goal_box);
            ++report.replans;
            for (double r : next.step_risk) report.max_planned_step_risk = std::max(report.max_planned_step_risk, r);
            if (next.states.size() > 1 || !extend) {
              Path merged;
              if (extend) {
                const std::size_t from = s - path_base;
                merged.states.assign(path.states.begin() + static_cast<std::ptrdiff_t>(from),
                                     path.states.begin() + static_cast<std::ptrdiff_t>(keep));
                merged.step_risk.assign(merged.states.size(), 0.0);
                merged.accumulated_risk.assign(merged.states.size(), 0.0);
                path_base += from;
              } else {
                path_base = s;
              }
              merged.states.insert(merged.states.end(), next.states.begin(), next.states.end());
              merged.step_risk.insert(merged.step_risk.end(), next.step_risk.begin(), next.step_risk.end());
              merged.accumulated_risk.insert(merged.accumulated_risk.end(), next.accumulated_risk.begin(),
                                             next.accumulated_risk.end());
              merged.partial = next.partial;
              path = std::move(merged);
            }
          } catch (const DataError& e) {
            if (logs.info) *logs.info << "t=" << t << " replan skipped: " << e.what() << '\n';
          }
        }
        if (!path.states.empty() && s >= path_base) {
          rover = path.states[std::min(s - path_base, path.states.size() - 1)].position;
        }
      }
      ++rover_steps;
      const Polytope goal_box = Polytope::box(target, Vec2::Constant(scenario.rover.goal_half_size));
      const bool stopped = path.states.empty() || s < path_base || s - path_base + 1 >= path.states.size();
      if (goal_box.contains(rover) && (stopped || !scenario.rover.planner)) {
        ++report.goals_reached;
        ++goal;
        if (scenario.rover.loop_goals && goal == scenario.rover.goals.size()) goal = 0;
        force_replan = true;
      }
    }

    bool hit = false;
    for (auto& a : agents) {
      if (!a.started || a.done) continue;
      const double sep = (a.body->position() - rover).norm();
      report.min_separation = std::min(report.min_separation, sep);
      if (sep < scenario.collision_radius) hit = true;
      if (logs.steps) {
        const auto post = a.tracker ? a.tracker->posterior() : std::vector<double>{};
        const std::size_t top = post.empty() ? 0 : argmax(post);
        *logs.steps << t << ',' << a.spec->id << ',' << a.body->cycles() << ',' << a.body->position().x() << ','
                    << a.body->position().y() << ',' << rover.x() << ',' << rover.y() << ',' << sep << ',' << mix.size()
                    << ','
                    << (post.empty() ? -1 : static_cast<long>(top)) << ',' << (post.empty() ? 0.0 : post[top])
                    << ',' << (a.tracker && a.tracker->unexplained() ? 1 : 0) << '\n';
      }
    }
    if (hit) ++report.collisions;

    for (auto& a : agents) {
      if (!a.started || a.done) continue;
      const std::size_t laps = a.body->cycles();
      const bool moving = a.body->step(dt);
      if (a.body->cycles() > laps) finalize(t + dt, a);
      if (!moving) {
        finalize(t + dt, a);
        a.done = true;
      }
    }
    report.steps = s + 1;
  }
  report.patterns_end = mix.size();
  if (!std::isfinite(report.min_separation)) report.min_separation = 0.0;
  return report;
}

void write_report_json(std::ostream& out, const SimReport& report, std::uint64_t seed) {
  json j;
  j["seed"] = seed;
  j["collisions"] = report.collisions;
  j["goals_reached"] = report.goals_reached;
  j["min_separation"] = report.min_separation;
  j["steps"] = report.steps;
  j["replans"] = report.replans;
  j["patterns_start"] = report.patterns_start;
  j["patterns_end"] = report.patterns_end;
  j["max_planned_step_risk"] = report.max_planned_step_risk;
  json ev = json::array();
  for (const auto& e : report.events) {
    ev.push_back({{"time", e.time}, {"agent", e.agent}, {"kind", to_string(e.kind)}, {"patterns", e.patterns}});
  }
  j["events"] = ev;
  out << j.dump(2) << '\n';
}

}  // namespace flowpred
