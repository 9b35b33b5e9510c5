// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/behavior.hpp"

#include <cmath>

namespace flowpred {

void BehaviorScript::validate() const {
  if (waypoints.size() < 2) throw DataError("behavior '" + label + "' needs at least two waypoints");
  if (!(speed > 0.0)) throw DataError("behavior '" + label + "' needs a positive speed");
  if (position_noise < 0.0 || heading_jitter < 0.0) throw DataError("behavior '" + label + "' has negative noise");
  if (intent_switch && intent_switch->waypoints.empty()) {
    throw DataError("behavior '" + label + "' intent switch has no waypoints");
  }
}

ScriptedAgent::ScriptedAgent(const BehaviorScript& script, std::uint64_t seed)
    : script_(script), route_(script.waypoints), position_(script.waypoints.front()), label_(script.label),
      rng_(seed) {
  script_.validate();
  if (script_.cyclic) route_.push_back(route_.front());
}

bool ScriptedAgent::step(double dt) {
  if (finished_) return false;
  if (script_.intent_switch && !switched_ && elapsed_ >= script_.intent_switch->time - 1e-9) {
    switched_ = true;
    route_.assign(1, position_);
    route_.insert(route_.end(), script_.intent_switch->waypoints.begin(), script_.intent_switch->waypoints.end());
    next_ = 1;
    if (!script_.intent_switch->label.empty()) label_ = script_.intent_switch->label;
  }
  elapsed_ += dt;
  double travel = script_.speed * dt;
  std::normal_distribution<double> jitter(0.0, script_.heading_jitter);
  const double dtheta = script_.heading_jitter > 0 ? jitter(rng_) : 0.0;
  while (travel > 0.0) {
    const Vec2 to = route_[next_] - position_;
    const double dist = to.norm();
    if (dist <= travel) {
      position_ = route_[next_];
      travel -= dist;
      if (++next_ == route_.size()) {
        if (!script_.cyclic || switched_) {
          finished_ = true;
          return false;
        }
        ++cycles_;
        next_ = 1;
        return true;
      }
      continue;
    }
    const double heading = std::atan2(to.y(), to.x()) + dtheta;
    position_ += travel * Vec2(std::cos(heading), std::sin(heading));
    break;
  }
  return true;
}

Vec2 ScriptedAgent::observe() {
  if (script_.position_noise <= 0.0) return position_;
  std::normal_distribution<double> n(0.0, script_.position_noise);
  const double ex = n(rng_);
  const double ey = n(rng_);
  return position_ + Vec2(ex, ey);
}

std::vector<Trajectory> generate_synthetic(const BehaviorScript& script, std::size_t n, std::uint64_t seed,
                                           double period, const std::string& id_prefix) {
  if (n < 1) throw ConfigError("generate_synthetic needs n >= 1");
  if (!(period > 0.0)) throw ConfigError("observation period must be positive");
  script.validate();
  std::vector<Trajectory> out;
  std::mt19937_64 seeder(seed);
  const std::string prefix = id_prefix.empty() ? script.label : id_prefix;
  for (std::size_t i = 0; i < n; ++i) {
    ScriptedAgent agent(script, seeder());
    Trajectory t;
    t.id = prefix + "_" + std::to_string(i);
    const std::size_t max_steps = 200000;
    for (std::size_t k = 0; k < max_steps; ++k) {
      const Vec2 p = agent.observe();
      t.points.push_back({static_cast<double>(k) * period, p.x(), p.y()});
      t.labels.push_back(agent.label());
      if (!agent.step(period) || agent.cycles() > 0) {
        const Vec2 q = agent.observe();
        t.points.push_back({static_cast<double>(k + 1) * period, q.x(), q.y()});
        t.labels.push_back(agent.label());
        break;
      }
    }
    if (script.label.empty()) t.labels.clear();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace flowpred
