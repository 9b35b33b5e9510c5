// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/online.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "json.hpp"

namespace flowpred {

namespace {

std::vector<double> normalized(std::span<const double> logw) {
  std::vector<double> p(logw.size(), 0.0);
  if (logw.empty()) return p;
  const double top = *std::max_element(logw.begin(), logw.end());
  if (!std::isfinite(top)) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
    return p;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < logw.size(); ++j) {
    p[j] = std::isfinite(logw[j]) ? std::exp(logw[j] - top) : 0.0;
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = j;
  return out;
}

double segment_log_likelihood(const MotionPattern& p, std::span<const DerivativeSample> segment) {
  const auto capped = cap_samples(segment, 100);
  const GpModel::Inputs x = sample_locations(capped);
  return p.gp_dx.log_joint_likelihood(x, sample_targets(capped, Channel::dx)) +
         p.gp_dy.log_joint_likelihood(x, sample_targets(capped, Channel::dy));
}

}  // namespace

void OnlineConfig::validate() const {
  lrt.validate();
  if (!(support > 0.0 && support <= 1.0)) throw ConfigError("support must lie in (0, 1]");
  if (derivative_lag < 1) throw ConfigError("derivative lag must be >= 1");
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::none: return "none";
    case EventKind::intent_change: return "intent_change";
    case EventKind::novelty_started: return "novelty_started";
    case EventKind::novelty_learned: return "novelty_learned";
  }
  return "none";
}

std::vector<std::size_t> compare_to_models(std::span<const DerivativeSample> window, const MixtureModel& mixture,
                                           std::vector<LrtState>& states, std::span<const std::size_t> previous,
                                           double support, std::vector<LrtDecision>* decisions) {
  if (states.size() != mixture.size()) throw DataError("LRT state count does not match the mixture");
  if (window.size() < 2) return {previous.begin(), previous.end()};
  std::vector<std::size_t> fits;
  if (decisions) decisions->assign(mixture.size(), LrtDecision{});
  for (std::size_t j = 0; j < mixture.size(); ++j) {
    const LrtDecision d = lrt_step(window, mixture.patterns[j], states[j]);
    if (decisions) (*decisions)[j] = d;
    bool ok = d.degenerate ? std::find(previous.begin(), previous.end(), j) != previous.end() : d.fits;
    if (ok && support < 1.0) ok = mixture.patterns[j].unexplained_variance(window.back().location()) <= support;
    if (ok) fits.push_back(j);
  }
  return fits;
}

std::vector<double> posterior_update(std::span<const double> posterior, const DerivativeSample& sample,
                                     const MixtureModel& mixture) {
  if (posterior.size() != mixture.size()) throw DataError("posterior size does not match the mixture");
  std::vector<double> logw(posterior.size());
  for (std::size_t j = 0; j < posterior.size(); ++j) {
    logw[j] = posterior[j] > 0.0 ? std::log(posterior[j]) + mixture.patterns[j].sample_log_density(sample)
                                 : -std::numeric_limits<double>::infinity();
  }
  return normalized(logw);
}

AgentTracker::AgentTracker(std::string agent_id, const MixtureModel& mixture, const OnlineConfig& config)
    : agent_id_(std::move(agent_id)), config_(config), window_(config.lrt.window) {
  config_.validate();
  if (mixture.size() == 0) throw DataError("tracker needs a non-empty mixture");
  observed_.id = agent_id_;
  model_set_ = all_indices(mixture.size());
  lrt_states_.assign(mixture.size(), LrtState(config_.lrt.m, config_.lrt.eta));
  reset_to_priors(mixture);
}

void AgentTracker::reset_to_priors(const MixtureModel& mixture) {
  log_posterior_.assign(mixture.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < mixture.size(); ++j) {
    if (mixture.priors[j] > 0.0) log_posterior_[j] = std::log(mixture.priors[j]);
  }
}

void AgentTracker::update_posterior(const DerivativeSample& s, const MixtureModel& mixture) {
  for (std::size_t j = 0; j < log_posterior_.size(); ++j) {
    if (std::isfinite(log_posterior_[j])) log_posterior_[j] += mixture.patterns[j].sample_log_density(s);
  }
  const double top = *std::max_element(log_posterior_.begin(), log_posterior_.end());
  if (std::isfinite(top)) {
    for (double& v : log_posterior_) v -= top;
  }
}

std::vector<double> AgentTracker::posterior() const { return normalized(log_posterior_); }

void AgentTracker::sync(const MixtureModel& mixture) {
  const std::size_t old = log_posterior_.size();
  if (mixture.size() <= old) return;
  std::vector<double> p = posterior();
  double added = 0.0;
  for (std::size_t j = old; j < mixture.size(); ++j) added += mixture.priors[j];
  for (double& v : p) v *= (1.0 - added);
  for (std::size_t j = old; j < mixture.size(); ++j) p.push_back(mixture.priors[j]);
  log_posterior_.resize(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    log_posterior_[j] = p[j] > 0.0 ? std::log(p[j]) : -std::numeric_limits<double>::infinity();
  }
  lrt_states_.resize(mixture.size(), LrtState(config_.lrt.m, config_.lrt.eta));
}

OnlineEvent AgentTracker::observe(double t, const Vec2& position, const MixtureModel& mixture) {
  if (!observed_.points.empty() && !(t > observed_.points.back().t)) {
    throw DataError("observation times must strictly increase for agent " + agent_id_);
  }
  observed_.points.push_back({t, position.x(), position.y()});
  const std::size_t n = observed_.points.size();
  if (n <= config_.derivative_lag) return {EventKind::none, t};
  const TrajectoryPoint& a = observed_.points[n - 1 - config_.derivative_lag];
  const double dt = t - a.t;
  const DerivativeSample s{a.x, a.y, (position.x() - a.x) / dt, (position.y() - a.y) / dt};
  return step(s, t, mixture);
}

OnlineEvent AgentTracker::step(const DerivativeSample& sample, double t, const MixtureModel& mixture) {
  if (mixture.size() != log_posterior_.size()) sync(mixture);
  history_.push_back(sample);
  window_.push(sample);
  if (!config_.changepoint) {
    update_posterior(sample, mixture);
    return {EventKind::none, t};
  }

  const auto contents = window_.contents();
  const auto current = compare_to_models(contents, mixture, lrt_states_, model_set_, config_.support, &last_decisions_);
  if (current.empty()) {
    ++empty_steps_;
    OnlineEvent ev{EventKind::none, t};
    if (!novelty_flag_) {
      novelty_flag_ = true;
      ev.kind = EventKind::novelty_started;
    }
    if (empty_steps_ >= config_.novelty_commit_steps) {
      novelty_committed_ = true;
      model_set_.clear();
    }
    return ev;
  }
  empty_steps_ = 0;
  if (!novelty_committed_) novelty_flag_ = false;

  std::vector<std::size_t> both;
  std::set_intersection(model_set_.begin(), model_set_.end(), current.begin(), current.end(),
                        std::back_inserter(both));
  if (both.empty()) {
    reset_to_priors(mixture);
    segment_start_ = history_.size() - 1;
    for (auto& s : lrt_states_) s.reset();
    model_set_ = current;
    return {EventKind::intent_change, t};
  }
  update_posterior(sample, mixture);
  model_set_ = std::move(both);
  return {EventKind::none, t};
}

std::optional<std::size_t> finalize_trajectory(const AgentTracker& tracker, MixtureModel& mixture,
                                               const OnlineConfig& config, std::ostream* log) {
  if (!tracker.novelty_committed()) return std::nullopt;
  const Trajectory& traj = tracker.observed();
  if (traj.size() < 3) {
    if (log) *log << "warning: novelty of agent " << tracker.agent_id() << " discarded, trajectory too short\n";
    return std::nullopt;
  }
  const Trajectory one[] = {traj};
  const Hyperparameters init{};
  MotionPattern p = build_pattern(one, config.derivative_lag, config.max_pattern_points, init, init);
  if (p.samples.size() >= 2) {
    OptimizerOptions opts;
    opts.max_iterations = config.hyper_iterations;
    opts.bounds = config.hyper_bounds;
    const Hyperparameters hx = optimize_hyperparameters(p.samples, Channel::dx, init, opts);
    const Hyperparameters hy = optimize_hyperparameters(p.samples, Channel::dy, init, opts);
    p.refit(hx, hy);
  }
  p.label = "new" + std::to_string(mixture.size());
  p.lrt_reference = lrt_reference(p, one, config);
  mixture.patterns.push_back(std::move(p));
  mixture.reset_priors_from_counts();
  return mixture.size() - 1;
}

double lrt_reference(const MotionPattern& pattern, std::span<const Trajectory> trajectories,
                     const OnlineConfig& config, std::size_t every) {
  const LrtConfig& lrt = config.lrt;
  double sum = 0.0;
  std::size_t count = 0;
  every = std::max<std::size_t>(every, 1);
  for (const auto& t : trajectories) {
    const auto s = estimate_derivatives(t, config.derivative_lag);
    if (s.size() < lrt.window) continue;
    for (std::size_t end = lrt.window; end <= s.size(); end += every) {
      const auto v = lrt_statistic(std::span(s).subspan(end - lrt.window, lrt.window), pattern);
      if (!v) continue;
      sum += *v;
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::infinity();
}

void calibrate_references(MixtureModel& mixture, std::span<const Trajectory> trajectories,
                          const OnlineConfig& config) {
  std::unordered_map<std::string, const Trajectory*> by_id;
  for (const auto& t : trajectories) by_id[t.id] = &t;
  for (auto& p : mixture.patterns) {
    std::vector<Trajectory> members;
    for (const auto& id : p.members) {
      const auto it = by_id.find(id);
      if (it != by_id.end()) members.push_back(*it->second);
    }
    if (!members.empty()) p.lrt_reference = lrt_reference(p, members, config);
  }
}

MixtureModel reclassify_training(const MixtureModel& mixture, std::span<const Trajectory> trajectories,
                                 std::size_t k_min, const OnlineConfig& config) {
  if (k_min < 1) throw ConfigError("k_min must be >= 1");
  MixtureModel out;
  out.alpha = mixture.alpha;
  out.provenance = mixture.provenance;
  std::vector<std::string> removed;
  for (const auto& p : mixture.patterns) {
    if (p.count() > k_min) {
      out.patterns.push_back(p);
    } else {
      removed.insert(removed.end(), p.members.begin(), p.members.end());
    }
  }
  if (out.patterns.empty()) {
    throw DataError("no pattern has more than k_min=" + std::to_string(k_min) + " trajectories");
  }
  out.reset_priors_from_counts();

  std::unordered_map<std::string, const Trajectory*> by_id;
  for (const auto& t : trajectories) by_id[t.id] = &t;
  OnlineConfig replay = config;
  replay.changepoint = true;

  for (const auto& id : removed) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("trajectory '" + id + "' of a dropped pattern is not in the corpus");
    const Trajectory& traj = *it->second;
    AgentTracker tracker(id, out, replay);
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::size_t start = 0;
    for (const auto& pt : traj.points) {
      const OnlineEvent ev = tracker.observe(pt.t, {pt.x, pt.y}, out);
      if (ev.kind == EventKind::intent_change) {
        const std::size_t change = tracker.segment_start();
        // Samples inside the detection window straddle the change.
        const std::size_t end = change > start + config.lrt.window ? change - config.lrt.window : change;
        segments.emplace_back(start, end);
        start = change;
      }
    }
    segments.emplace_back(start, tracker.history().size());

    const auto& samples = tracker.history();
    for (const auto& [a, b] : segments) {
      if (b < a + 2) continue;
      const std::span<const DerivativeSample> seg(samples.data() + a, b - a);
      std::size_t best = 0;
      double best_ll = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double ll = segment_log_likelihood(out.patterns[j], seg);
        if (ll > best_ll) {
          best_ll = ll;
          best = j;
        }
      }
      MotionPattern& target = out.patterns[best];
      const auto add = thin_samples(seg, config.derivative_lag);
      target.samples.insert(target.samples.end(), add.begin(), add.end());
      target.samples = cap_samples(target.samples, config.max_pattern_points);
      if (std::find(target.members.begin(), target.members.end(), id) == target.members.end()) {
        target.members.push_back(id);
      }
      target.refit();
    }
  }
  out.reset_priors_from_counts();
  calibrate_references(out, trajectories, config);
  return out;
}

void write_event_record(std::ostream& out, double time, const std::string& agent, EventKind kind,
                        std::span<const std::size_t> model_set, std::span<const double> posterior) {
  nlohmann::json j;
  j["time"] = time;
  j["agent"] = agent;
  j["kind"] = to_string(kind);
  j["M_t"] = std::vector<std::size_t>(model_set.begin(), model_set.end());
  j["posterior"] = std::vector<double>(posterior.begin(), posterior.end());
  out << j.dump() << '\n';
}

}  // namespace flowpred
