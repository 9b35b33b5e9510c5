// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace flowpred {

namespace {

// P(N(0,1) > z)
double upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

Vec2 centroid(const Polytope& p) {
  // Mean of face support points; exact for boxes.
  Vec2 c = Vec2::Zero();
  for (const auto& f : p.faces) c += f.offset * f.normal;
  return p.faces.empty() ? c : Vec2(c / static_cast<double>(p.faces.size()) * 2.0);
}

}  // namespace

Polytope Polytope::box(const Vec2& center, const Vec2& half_size) {
  if (!(half_size.x() > 0.0 && half_size.y() > 0.0)) throw ConfigError("box half sizes must be positive");
  Polytope p;
  p.faces.push_back({Vec2(1, 0), center.x() + half_size.x()});
  p.faces.push_back({Vec2(-1, 0), -(center.x() - half_size.x())});
  p.faces.push_back({Vec2(0, 1), center.y() + half_size.y()});
  p.faces.push_back({Vec2(0, -1), -(center.y() - half_size.y())});
  return p;
}

bool Polytope::contains(const Vec2& p) const {
  return std::all_of(faces.begin(), faces.end(), [&](const Halfspace& h) { return h.normal.dot(p) <= h.offset; });
}

Polytope Polytope::translated(const Vec2& d) const {
  Polytope out = *this;
  for (auto& f : out.faces) f.offset += f.normal.dot(d);
  return out;
}

Polytope Polytope::inflated(double margin) const {
  Polytope out = *this;
  for (auto& f : out.faces) f.offset += margin;
  return out;
}

void Polytope::validate() const {
  if (faces.empty()) throw DataError("polytope has no faces");
  for (const auto& f : faces) {
    if (std::abs(f.normal.norm() - 1.0) > 1e-9) throw DataError("polytope face normal is not unit length");
  }
}

bool Bounds::contains(const Vec2& p) const {
  return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() && p.y() <= hi.y();
}

GaussianStep ProbabilisticObstacle::at(double t) const {
  const double k = std::round((t - t0) / dt);
  if (k < 1.0 || steps.empty()) return {origin, Mat2::Zero()};
  const auto idx = static_cast<std::size_t>(k) - 1;
  if (idx < steps.size()) return steps[idx];
  GaussianStep g = steps.back();
  const double extra = static_cast<double>(idx - (steps.size() - 1));
  g.cov += extra * dt * dt * beyond_growth * Mat2::Identity();
  return g;
}

std::vector<ProbabilisticObstacle> obstacles_from_fan(const PredictionFan& fan, double t0, const Polytope& shape,
                                                      double beyond_growth) {
  std::vector<ProbabilisticObstacle> out;
  for (const auto& b : fan.branches) {
    ProbabilisticObstacle o;
    o.shape = shape;
    o.steps = b.steps;
    o.origin = fan.origin;
    o.likelihood = b.weight;
    o.t0 = t0;
    o.dt = fan.dt;
    o.beyond_growth = beyond_growth;
    out.push_back(std::move(o));
  }
  return out;
}

double collision_risk(const Vec2& position, const ProbabilisticObstacle& obstacle, double t) {
  if (obstacle.likelihood <= 0.0) return 0.0;
  const GaussianStep g = obstacle.at(t);
  // Inside face i: a.(x - c) <= b, i.e. a.c >= a.x - b with a.c ~ N(a.mu, a'Sa).
  double bound = 1.0;
  for (const auto& f : obstacle.shape.faces) {
    const double margin = f.normal.dot(position) - f.offset - f.normal.dot(g.mean);
    const double var = f.normal.dot(g.cov * f.normal);
    double p;
    if (var <= 0.0) {
      p = margin <= 0.0 ? 1.0 : 0.0;
    } else {
      p = upper_tail(margin / std::sqrt(var));
    }
    bound = std::min(bound, p);
  }
  return obstacle.likelihood * bound;
}

void RiskConfig::validate() const {
  if (!(delta_s >= 0.5 && delta_s <= 1.0)) throw ConfigError("delta_s must lie in [0.5, 1]");
  if (!(delta_p >= 0.5 && delta_p <= 1.0)) throw ConfigError("delta_p must lie in [0.5, 1]");
}

void PlannerConfig::validate() const {
  risk.validate();
  if (budget < 1) throw ConfigError("planner budget must be >= 1");
  if (!(goal_bias >= 0.0 && goal_bias <= 1.0)) throw ConfigError("goal bias must lie in [0, 1]");
  if (!(max_extension > 0.0 && v_max > 0.0 && a_max > 0.0 && dt > 0.0)) {
    throw ConfigError("planner extension, limits and dt must be positive");
  }
  if (hold_time < 0.0 || max_wait < 0.0) throw ConfigError("hold and wait times must be non-negative");
}

double total_risk(const Vec2& position, double t, std::span<const ProbabilisticObstacle> obstacles) {
  double total = 0.0;
  for (const auto& o : obstacles) total += collision_risk(position, o, t);
  return total;
}

bool state_feasible(const Vec2& position, double t, const World& world,
                    std::span<const ProbabilisticObstacle> obstacles, const RiskConfig& risk) {
  if (!world.bounds.contains(position)) return false;
  for (const auto& s : world.statics) {
    if (s.contains(position)) return false;
  }
  return total_risk(position, t, obstacles) <= 1.0 - risk.delta_s;
}

std::vector<VehicleState> steer(const VehicleState& from, const Vec2& to, const PlannerConfig& config) {
  const Vec2 delta = to - from.position;
  const double d = delta.norm();
  std::vector<VehicleState> out;
  if (d < 1e-9) return out;
  const Vec2 dir = delta / d;
  const double v = config.v_max, a = config.a_max;
  double t_acc, t_cruise, v_peak;
  if (d >= v * v / a) {
    t_acc = v / a;
    t_cruise = (d - v * v / a) / v;
    v_peak = v;
  } else {
    t_acc = std::sqrt(d / a);
    t_cruise = 0.0;
    v_peak = a * t_acc;
  }
  const double total = 2.0 * t_acc + t_cruise;
  const auto n = static_cast<std::size_t>(std::ceil(total / config.dt - 1e-9));
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = std::min(static_cast<double>(i) * config.dt, total);
    double s, speed;
    if (t < t_acc) {
      s = 0.5 * a * t * t;
      speed = a * t;
    } else if (t < t_acc + t_cruise) {
      s = 0.5 * a * t_acc * t_acc + v_peak * (t - t_acc);
      speed = v_peak;
    } else {
      const double r = total - t;
      s = d - 0.5 * a * r * r;
      speed = a * r;
    }
    out.push_back({from.position + s * dir, speed * dir, from.time + static_cast<double>(i) * config.dt});
  }
  out.back().position = to;
  out.back().velocity = Vec2::Zero();
  return out;
}

Tree grow_tree(const VehicleState& root, const World& world, std::span<const ProbabilisticObstacle> obstacles,
               const Polytope& goal, const PlannerConfig& config, std::uint64_t seed) {
  config.validate();
  if (!state_feasible(root.position, root.time, world, obstacles, config.risk)) {
    throw DataError("planner root state is infeasible");
  }
  Tree tree;
  TreeNode r;
  r.state = root;
  r.state.velocity = Vec2::Zero();
  tree.nodes.push_back(r);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec2 goal_center = centroid(goal);
  const double step_cap = 1.0 - config.risk.delta_s;
  const double path_cap = 1.0 - config.risk.delta_p;
  const auto hold_steps = static_cast<std::size_t>(std::round(config.hold_time / config.dt));
  const auto wait_steps_max = static_cast<std::size_t>(std::round(config.max_wait / config.dt));

  for (std::size_t it = 0; it < config.budget; ++it) {
    Vec2 target;
    if (unit(rng) < config.goal_bias) {
      target = goal_center;
    } else {
      target = Vec2(world.bounds.lo.x() + unit(rng) * (world.bounds.hi.x() - world.bounds.lo.x()),
                    world.bounds.lo.y() + unit(rng) * (world.bounds.hi.y() - world.bounds.lo.y()));
    }
    std::size_t wait = 0;
    if (wait_steps_max > 0 && unit(rng) < config.wait_probability) {
      wait = 1 + static_cast<std::size_t>(unit(rng) * static_cast<double>(wait_steps_max));
    }

    std::size_t near = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const double d = (tree.nodes[i].state.position - target).squaredNorm();
      if (d < best) {
        best = d;
        near = i;
      }
    }
    const TreeNode& parent = tree.nodes[near];
    Vec2 to = target;
    const double dist = std::sqrt(best);
    if (dist > config.max_extension) to = parent.state.position + (target - parent.state.position) * (config.max_extension / dist);
    if ((to - parent.state.position).norm() < 0.05 && wait == 0) continue;

    std::vector<VehicleState> seg;
    VehicleState cur = parent.state;
    for (std::size_t w = 0; w < wait; ++w) {
      cur.time += config.dt;
      seg.push_back(cur);
    }
    const auto moving = steer(cur, to, config);
    seg.insert(seg.end(), moving.begin(), moving.end());
    if (seg.empty()) continue;

    TreeNode node;
    node.parent = static_cast<int>(near);
    node.path_risk = parent.path_risk;
    bool ok = true;
    for (const auto& s : seg) {
      if (!world.bounds.contains(s.position) ||
          std::any_of(world.statics.begin(), world.statics.end(), [&](const Polytope& p) { return p.contains(s.position); })) {
        ok = false;
        break;
      }
      const double risk = total_risk(s.position, s.time, obstacles);
      if (risk > step_cap) {
        ok = false;
        break;
      }
      node.segment_risk.push_back(risk);
      node.path_risk += risk;
      if (node.path_risk > path_cap) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    const VehicleState end = seg.back();
    for (std::size_t h = 1; h <= hold_steps && ok; ++h) {
      ok = total_risk(end.position, end.time + static_cast<double>(h) * config.dt, obstacles) <= step_cap;
    }
    if (!ok) continue;
    node.state = end;
    node.segment = std::move(seg);
    tree.nodes.push_back(std::move(node));
  }
  return tree;
}

Path best_path(const Tree& tree, const Polytope& goal) {
  if (tree.nodes.empty()) throw DataError("empty tree");
  int pick = -1;
  double best_time = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    if (goal.contains(n.state.position) && n.state.time < best_time) {
      best_time = n.state.time;
      pick = static_cast<int>(i);
    }
  }
  Path path;
  if (pick < 0) {
    path.partial = true;
    const Vec2 c = centroid(goal);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const double d = (tree.nodes[i].state.position - c).norm();
      if (d < best - 1e-12) {
        best = d;
        pick = static_cast<int>(i);
      }
    }
  }
  std::vector<int> chain;
  for (int i = pick; i >= 0; i = tree.nodes[static_cast<std::size_t>(i)].parent) chain.push_back(i);
  std::reverse(chain.begin(), chain.end());
  const auto& root = tree.nodes[static_cast<std::size_t>(chain.front())];
  path.states.push_back(root.state);
  path.step_risk.push_back(0.0);
  path.accumulated_risk.push_back(0.0);
  for (std::size_t c = 1; c < chain.size(); ++c) {
    const auto& n = tree.nodes[static_cast<std::size_t>(chain[c])];
    for (std::size_t s = 0; s < n.segment.size(); ++s) {
      path.states.push_back(n.segment[s]);
      path.step_risk.push_back(n.segment_risk[s]);
      path.accumulated_risk.push_back(path.accumulated_risk.back() + n.segment_risk[s]);
    }
  }
  return path;
}

void write_plan_csv(std::ostream& out, const Path& path) {
  out << "t,x,y,vx,vy,step_risk,accumulated_risk\n";
  for (std::size_t i = 0; i < path.states.size(); ++i) {
    const auto& s = path.states[i];
    out << s.time << ',' << s.position.x() << ',' << s.position.y() << ',' << s.velocity.x() << ','
        << s.velocity.y() << ',' << path.step_risk[i] << ',' << path.accumulated_risk[i] << '\n';
  }
}

}  // namespace flowpred
