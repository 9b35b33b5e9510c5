// Apache License, Version 2.0, refer to LICENSE.txt

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "flowpred/sim.hpp"

using namespace flowpred;

namespace {

const MixtureModel& crosswalk_model() {
  static const MixtureModel m = train_scenario(fixtures::crosswalk());
  return m;
}

struct Row {
  double t;
  std::string agent;
  double x, y, rx, ry, sep;
};

std::vector<Row> parse_steps(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream s(line);
    std::string c;
    while (std::getline(s, c, ',')) f.push_back(c);
    rows.push_back({std::stod(f[0]), f[1], std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6]),
                    std::stod(f[7])});
  }
  return rows;
}

}  // namespace

TEST_CASE("noise-free scripts repeat exactly") {
  BehaviorScript s = fixtures::line("L", {1, 1}, {6, 5}, 0.8, 0.0, 0.0);
  const auto t = generate_synthetic(s, 3, 9);
  REQUIRE(t.size() == 3);
  for (std::size_t i = 1; i < 3; ++i) {
    REQUIRE(t[i].size() == t[0].size());
    for (std::size_t k = 0; k < t[0].size(); ++k) {
      CHECK(t[i].points[k].x == t[0].points[k].x);
      CHECK(t[i].points[k].y == t[0].points[k].y);
    }
  }
  // Straight line at constant speed: the length walked in a period is speed * period.
  for (std::size_t k = 1; k + 1 < t[0].size(); ++k) {
    CHECK((t[0].position(k) - t[0].position(k - 1)).norm() == doctest::Approx(0.08).epsilon(1e-9));
  }
  CHECK((t[0].position(t[0].size() - 1) - Vec2(6, 5)).norm() < 1e-9);
}

TEST_CASE("crosswalk training corpus has twenty labeled trajectories") {
  const Scenario sc = fixtures::crosswalk();
  const auto corpus = training_corpus(sc);
  CHECK(corpus.size() == 20);
  for (const auto& t : corpus) {
    t.validate();
    CHECK(t.labeled());
    for (const auto& p : t.points) CHECK(sc.world.contains({p.x, p.y}));
  }
}

TEST_CASE("intent switch reverses the walk at the scripted time") {
  BehaviorScript s = fixtures::crosswalk().behaviors.at("G");
  s.position_noise = 0.0;
  s.heading_jitter = 0.0;
  s.intent_switch = IntentSwitch{18.0, {{8.0, 1.5}, {0.8, 1.5}}, "T"};
  const auto t = generate_synthetic(s, 1, 3).front();
  std::size_t first_t = t.size();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.labels[i] == "T") {
      first_t = i;
      break;
    }
  }
  REQUIRE(first_t < t.size());
  CHECK(std::abs(t.points[first_t].t - 18.0) <= 0.1 + 1e-9);
  // Northbound before, southbound after.
  CHECK(t.position(first_t - 5).y() < t.position(first_t - 1).y());
  CHECK(t.position(first_t + 5).y() < t.position(first_t + 1).y());
  CHECK(t.labels.back() == "T");
}

TEST_CASE("scenario parsing") {
  const Scenario sc = fixtures::crosswalk();
  CHECK(sc.behaviors.size() == 4);
  CHECK(sc.training.per_behavior == 5);
  CHECK_THROWS_AS(parse_scenario(R"({"name": "x", "bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{not json"), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), DataError);

  Scenario bad = sc;
  bad.rover.goals.push_back({40, 1});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = sc;
  bad.behaviors["B"].waypoints.push_back({-3, 1});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = sc;
  bad.agents.push_back({"ghost", "Z", 0.0, {}});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("crosswalk closed loop") {
  const Scenario sc = fixtures::crosswalk();
  std::ostringstream steps, events, info;
  const SimReport r = run_closed_loop(sc, crosswalk_model(), 7, {&steps, &events, &info});
  CHECK(r.collisions == 0);
  CHECK(r.goals_reached >= 1);
  CHECK(r.max_planned_step_risk <= 1.0 - sc.planner.config.risk.delta_s + 1e-12);
  const auto rows = parse_steps(steps.str());
  REQUIRE_FALSE(rows.empty());
  std::size_t close = 0;
  for (const auto& row : rows) {
    CHECK(sc.world.contains({row.x, row.y}));
    CHECK(row.sep == doctest::Approx(std::hypot(row.x - row.rx, row.y - row.ry)).epsilon(1e-4));
    if (row.sep < sc.collision_radius) ++close;
  }
  CHECK(close == r.collisions);

  // The rover holds at least once while the pedestrian is on the crossing.
  bool waited = false;
  const Row* prev = nullptr;
  for (const auto& row : rows) {
    if (row.agent != "ped_g") continue;
    const bool on_crossing = row.x > 7.0 && row.x < 9.0 && row.y > 3.0 && row.y < 7.0;
    if (prev && on_crossing && prev->rx == row.rx && prev->ry == row.ry && row.rx < 8.0) waited = true;
    prev = &row;
  }
  CHECK(waited);

  std::ostringstream steps2, events2, info2;
  const SimReport r2 = run_closed_loop(sc, crosswalk_model(), 7, {&steps2, &events2, &info2});
  CHECK(steps.str() == steps2.str());
  CHECK(events.str() == events2.str());
  std::ostringstream j1, j2;
  write_report_json(j1, r, 7);
  write_report_json(j2, r2, 7);
  CHECK(j1.str() == j2.str());
}

TEST_CASE("without the planner the rover hits the pedestrian") {
  const Scenario sc = load_scenario(fixtures::source_path("scenarios/crosswalk_no_planner.json"));
  CHECK_FALSE(sc.rover.planner);
  const SimReport r = run_closed_loop(sc, crosswalk_model(), 1);
  CHECK(r.collisions > 0);
}
