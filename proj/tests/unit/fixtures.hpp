// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "flowpred/behavior.hpp"
#include "flowpred/dpgp.hpp"
#include "flowpred/sim.hpp"

namespace fixtures {

using flowpred::BehaviorScript;
using flowpred::Trajectory;
using flowpred::Vec2;

inline double log_normal(double x, double mean, double var) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - mean) * (x - mean) / var);
}

inline BehaviorScript line(const std::string& label, Vec2 a, Vec2 b, double speed = 0.8, double noise = 0.05,
                           double jitter = 0.1) {
  BehaviorScript s;
  s.label = label;
  s.waypoints = {a, b};
  s.speed = speed;
  s.position_noise = noise;
  s.heading_jitter = jitter;
  return s;
}

inline void append(std::vector<Trajectory>& out, const std::vector<Trajectory>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

inline std::string source_path(const std::string& rel) { return std::string(FLOWPRED_SOURCE_DIR) + "/" + rel; }

inline flowpred::Scenario crosswalk() { return flowpred::load_scenario(source_path("scenarios/crosswalk.json")); }

// Label partition check: every pattern's members share one label and no
// label is split across patterns.
inline bool recovers_labels(const flowpred::MixtureModel& m, const std::vector<Trajectory>& corpus) {
  std::vector<std::string> seen;
  for (const auto& p : m.patterns) {
    std::string label;
    for (const auto& id : p.members) {
      for (const auto& t : corpus) {
        if (t.id != id) continue;
        const std::string l = flowpred::majority_label(t);
        if (label.empty()) label = l;
        if (l != label) return false;
      }
    }
    for (const auto& s : seen)
      if (s == label) return false;
    seen.push_back(label);
  }
  return true;
}

}  // namespace fixtures
