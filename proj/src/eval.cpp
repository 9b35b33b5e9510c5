// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/eval.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <ostream>

namespace flowpred {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Velocity over the last `lag` observations, or over whatever exists.
Vec2 recent_velocity(const Trajectory& t, std::size_t upto, std::size_t lag) {
  if (upto == 0) return Vec2::Zero();
  const std::size_t from = upto > lag ? upto - lag : 0;
  const auto& a = t.points[from];
  const auto& b = t.points[upto];
  return Vec2(b.x - a.x, b.y - a.y) / (b.t - a.t);
}

std::vector<Vec2> truth_after(const Trajectory& t, std::size_t i, std::size_t k) {
  std::vector<Vec2> out;
  for (std::size_t j = i + 1; j <= i + k; ++j) out.emplace_back(t.points[j].x, t.points[j].y);
  return out;
}

std::size_t true_pattern(const MixtureModel& mixture, const Trajectory& t, std::size_t i) {
  if (!t.labeled() || t.labels[i].empty()) return mixture.size();
  return mixture.find_label(t.labels[i]);
}

TrialTrace run_trial(const MixtureModel& mixture, const Trajectory& traj, PredictorKind kind,
                     const EvalConfig& config) {
  TrialTrace trace;
  trace.trajectory = traj.id;
  const std::size_t n = traj.size();
  trace.time.resize(n);
  trace.correct_probability.assign(n, kNaN);
  trace.rms.assign(n, kNaN);
  for (std::size_t i = 0; i < n; ++i) trace.time[i] = traj.points[i].t - traj.points.front().t;
  const double dt = n >= 2 ? (traj.points.back().t - traj.points.front().t) / static_cast<double>(n - 1) : 0.1;
  const std::size_t lag = config.online.derivative_lag;

  if (kind == PredictorKind::changepoint_dpgp || kind == PredictorKind::dpgp) {
    OnlineConfig oc = config.online;
    oc.changepoint = kind == PredictorKind::changepoint_dpgp;
    AgentTracker tracker(traj.id, mixture, oc);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = traj.points[i];
      const OnlineEvent ev = tracker.observe(p.t, {p.x, p.y}, mixture);
      if (ev.kind == EventKind::intent_change) trace.intent_changes.push_back(i);
      if (ev.kind == EventKind::novelty_started) trace.novelty_starts.push_back(i);
      const std::size_t truth = true_pattern(mixture, traj, i);
      if (truth < mixture.size()) trace.correct_probability[i] = correct_pattern_probability(tracker.posterior(), truth);
      if (i + config.horizon < n && i % config.rms_every == 0) {
        const auto fan = tracker_fan(tracker, mixture, config.horizon, dt);
        trace.rms[i] = rms_error(fan, truth_after(traj, i, config.horizon));
      }
    }
  } else if (kind == PredictorKind::goal_directed) {
    std::vector<Vec2> goals;
    for (const auto& pat : mixture.patterns) goals.push_back(pat.goal);
    GoalDirectedTracker gd(goals, mixture.priors, config.goal);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = traj.points[i];
      if (i >= lag) {
        const auto& a = traj.points[i - lag];
        gd.update({a.x, a.y, (p.x - a.x) / (p.t - a.t), (p.y - a.y) / (p.t - a.t)});
      }
      const std::size_t truth = true_pattern(mixture, traj, i);
      if (truth < mixture.size()) trace.correct_probability[i] = gd.posterior()[truth];
      if (i + config.horizon < n && i % config.rms_every == 0) {
        const double speed = recent_velocity(traj, i, lag).norm();
        const auto fan = gd.predict({p.x, p.y}, speed, config.horizon, dt, config.cv_growth);
        trace.rms[i] = rms_error(fan, truth_after(traj, i, config.horizon));
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = traj.points[i];
      if (i + config.horizon < n && i % config.rms_every == 0) {
        const auto fan = constant_velocity_fan({p.x, p.y}, recent_velocity(traj, i, lag), config.horizon, dt,
                                               config.cv_growth);
        trace.rms[i] = rms_error(fan, truth_after(traj, i, config.horizon));
      }
    }
  }
  return trace;
}

void write_curve(std::ostream& out, const EvalResult& result, bool rms) {
  out << "predictor,step,time,mean,sd,count\n";
  for (std::size_t p = 0; p < result.predictors.size(); ++p) {
    for (const auto& c : mean_curve(result.traces[p], rms)) {
      out << to_string(result.predictors[p]) << ',' << c.step << ',' << c.time << ',' << c.mean << ',' << c.sd
          << ',' << c.count << '\n';
    }
  }
}

}  // namespace

const char* to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::changepoint_dpgp: return "changepoint_dpgp";
    case PredictorKind::dpgp: return "dpgp";
    case PredictorKind::constant_velocity: return "constant_velocity";
    case PredictorKind::goal_directed: return "goal_directed";
  }
  return "";
}

PredictorKind parse_predictor(const std::string& name) {
  for (PredictorKind k : all_predictors()) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown predictor '" + name + "'");
}

std::vector<PredictorKind> all_predictors() {
  return {PredictorKind::changepoint_dpgp, PredictorKind::dpgp, PredictorKind::constant_velocity,
          PredictorKind::goal_directed};
}

double fallback_growth(const MixtureModel& mixture, const Vec2& position) {
  if (mixture.size() == 0) return 0.0;
  std::size_t best = 0;
  double least = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < mixture.size(); ++j) {
    const double u = mixture.patterns[j].unexplained_variance(position);
    if (u < least) {
      least = u;
      best = j;
    }
  }
  const auto& p = mixture.patterns[best];
  return 0.5 * (p.gp_dx.hyper().noise_variance + p.gp_dy.hyper().noise_variance);
}

PredictionFan tracker_fan(const AgentTracker& tracker, const MixtureModel& mixture, std::size_t k, double dt) {
  const Trajectory& obs = tracker.observed();
  if (obs.points.empty()) throw DataError("tracker of agent " + tracker.agent_id() + " has no observations");
  const Vec2 here(obs.points.back().x, obs.points.back().y);
  if (!tracker.unexplained() && !tracker.history().empty()) {
    return mixture_predict(mixture, tracker.posterior(), here, k, dt);
  }
  Vec2 v = Vec2::Zero();
  if (!tracker.window().empty()) {
    v = tracker.window().mean_velocity();
  } else if (obs.size() >= 2) {
    v = recent_velocity(obs, obs.size() - 1, obs.size());
  }
  return constant_velocity_fan(here, v, k, dt, fallback_growth(mixture, here));
}

void EvalConfig::validate() const {
  online.validate();
  if (horizon < 1) throw ConfigError("prediction horizon must be >= 1");
  if (rms_every < 1) throw ConfigError("rms_every must be >= 1");
  if (predictors.empty()) throw ConfigError("no predictor selected");
}

const std::vector<TrialTrace>& EvalResult::of(PredictorKind kind) const {
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    if (predictors[p] == kind) return traces[p];
  }
  throw ConfigError(std::string("predictor ") + to_string(kind) + " was not evaluated");
}

EvalResult run_prediction_eval(const MixtureModel& mixture, std::span<const Trajectory> trials,
                               const EvalConfig& config) {
  config.validate();
  mixture.validate();
  EvalResult result;
  result.predictors = config.predictors;
  for (PredictorKind kind : config.predictors) {
    std::vector<std::future<TrialTrace>> jobs;
    for (const auto& t : trials) {
      jobs.push_back(std::async(std::launch::async, [&mixture, &t, kind, &config] {
        return run_trial(mixture, t, kind, config);
      }));
    }
    std::vector<TrialTrace> traces;
    for (auto& j : jobs) traces.push_back(j.get());
    result.traces.push_back(std::move(traces));
  }
  return result;
}

std::vector<CurvePoint> mean_curve(std::span<const TrialTrace> traces, bool rms) {
  std::size_t longest = 0;
  for (const auto& t : traces) longest = std::max(longest, t.time.size());
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < longest; ++i) {
    double sum = 0.0, sq = 0.0, time = 0.0;
    std::size_t count = 0;
    for (const auto& t : traces) {
      if (i >= t.time.size()) continue;
      const double v = rms ? t.rms[i] : t.correct_probability[i];
      if (!std::isfinite(v)) continue;
      sum += v;
      sq += v * v;
      time += t.time[i];
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    const double var = count > 1 ? std::max(0.0, (sq - count * mean * mean) / static_cast<double>(count - 1)) : 0.0;
    out.push_back({i, time / static_cast<double>(count), mean, std::sqrt(var), count});
  }
  return out;
}

void write_intent_curve(std::ostream& out, const EvalResult& result) { write_curve(out, result, false); }
void write_rms_curve(std::ostream& out, const EvalResult& result) { write_curve(out, result, true); }

double finite_mean(std::span<const double> values, std::size_t from) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = from; i < values.size(); ++i) {
    if (std::isfinite(values[i])) {
      sum += values[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

}  // namespace flowpred
