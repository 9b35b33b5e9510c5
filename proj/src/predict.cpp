// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/predict.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

namespace flowpred {

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

}  // namespace

Vec2 PredictionFan::mean(std::size_t k) const {
  Vec2 m = Vec2::Zero();
  for (const auto& b : branches) m += b.weight * b.steps.at(k).mean;
  return m;
}

void PredictionFan::validate() const {
  double total = 0.0;
  for (const auto& b : branches) {
    if (b.weight < 0.0) throw DataError("fan weight is negative");
    if (b.steps.size() != horizon()) throw DataError("fan branches have different horizons");
    total += b.weight;
  }
  if (!branches.empty() && std::abs(total - 1.0) > 1e-9) throw DataError("fan weights do not sum to 1");
}

std::vector<GaussianStep> propagate(const MotionPattern& pattern, const Vec2& start, std::size_t k, double dt) {
  if (k < 1) throw ConfigError("prediction horizon must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("prediction dt must be positive");
  std::vector<GaussianStep> out;
  out.reserve(k);
  Vec2 mean = start;
  Mat2 cov = Mat2::Zero();
  for (std::size_t i = 0; i < k; ++i) {
    const PosteriorPoint px = pattern.gp_dx.predict(mean);
    const PosteriorPoint py = pattern.gp_dy.predict(mean);
    Mat2 jac;
    jac.row(0) = pattern.gp_dx.mean_gradient(mean).transpose();
    jac.row(1) = pattern.gp_dy.mean_gradient(mean).transpose();
    const Mat2 a = Mat2::Identity() + dt * jac;
    Mat2 next = a * cov * a.transpose();
    next(0, 0) += dt * dt * px.variance;
    next(1, 1) += dt * dt * py.variance;
    // A converging field may contract the transported part, but the total
    // uncertainty never drops below the previous step's.
    const double deficit = cov.trace() - next.trace();
    if (deficit > 0.0) next += 0.5 * deficit * Mat2::Identity();
    cov = 0.5 * (next + next.transpose());
    mean += dt * Vec2(px.mean, py.mean);
    out.push_back({mean, cov});
  }
  return out;
}

std::vector<GaussianStep> propagate_particles(const MotionPattern& pattern, const Vec2& start, std::size_t k,
                                              double dt, std::size_t particles, std::uint64_t seed) {
  if (k < 1 || particles < 2) throw ConfigError("particle propagation needs k >= 1 and >= 2 particles");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Vec2> p(particles, start);
  std::vector<GaussianStep> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (auto& q : p) {
      const PosteriorPoint px = pattern.gp_dx.predict(q);
      const PosteriorPoint py = pattern.gp_dy.predict(q);
      const Vec2 v(px.mean + std::sqrt(px.variance) * normal(rng), py.mean + std::sqrt(py.variance) * normal(rng));
      q += dt * v;
    }
    GaussianStep g;
    for (const auto& q : p) g.mean += q;
    g.mean /= static_cast<double>(particles);
    for (const auto& q : p) g.cov += (q - g.mean) * (q - g.mean).transpose();
    g.cov /= static_cast<double>(particles - 1);
    out.push_back(g);
  }
  return out;
}

std::vector<GaussianStep> baseline_constant_velocity(const Vec2& start, const Vec2& velocity, std::size_t k,
                                                     double dt, double growth) {
  if (k < 1) throw ConfigError("prediction horizon must be >= 1");
  if (growth < 0.0) throw ConfigError("variance growth must be non-negative");
  std::vector<GaussianStep> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double steps = static_cast<double>(i + 1);
    out[i].mean = start + steps * dt * velocity;
    out[i].cov = steps * dt * dt * growth * Mat2::Identity();
  }
  return out;
}

PredictionFan mixture_predict(const MixtureModel& mixture, std::span<const double> posterior, const Vec2& start,
                              std::size_t k, double dt, double prune) {
  if (posterior.size() != mixture.size()) throw DataError("posterior size does not match the mixture");
  PredictionFan fan;
  fan.dt = dt;
  fan.origin = start;
  std::size_t best = 0;
  double kept = 0.0;
  for (std::size_t j = 0; j < posterior.size(); ++j) {
    if (posterior[j] > posterior[best]) best = j;
    if (posterior[j] >= prune) kept += posterior[j];
  }
  for (std::size_t j = 0; j < posterior.size(); ++j) {
    if (posterior[j] < prune && !(kept == 0.0 && j == best)) continue;
    fan.branches.push_back({static_cast<int>(j), kept > 0.0 ? posterior[j] / kept : 1.0,
                            propagate(mixture.patterns[j], start, k, dt)});
  }
  return fan;
}

PredictionFan constant_velocity_fan(const Vec2& start, const Vec2& velocity, std::size_t k, double dt,
                                    double growth) {
  PredictionFan fan;
  fan.dt = dt;
  fan.origin = start;
  fan.branches.push_back({-1, 1.0, baseline_constant_velocity(start, velocity, k, dt, growth)});
  return fan;
}

double rms_error(const PredictionFan& fan, std::span<const Vec2> truth) {
  if (truth.size() != fan.horizon() || truth.empty()) {
    throw DataError("truth length " + std::to_string(truth.size()) + " does not match the fan horizon " +
                    std::to_string(fan.horizon()));
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) sum += (fan.mean(k) - truth[k]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(truth.size()));
}

double correct_pattern_probability(std::span<const double> posterior, std::size_t true_pattern) {
  if (true_pattern >= posterior.size()) {
    throw DataError("pattern " + std::to_string(true_pattern) + " is not in the mixture");
  }
  return posterior[true_pattern];
}

GoalDirectedTracker::GoalDirectedTracker(std::vector<Vec2> goals, std::vector<double> priors,
                                         const GoalDirectedConfig& config)
    : goals_(std::move(goals)), posterior_(std::move(priors)), config_(config) {
  if (goals_.empty() || goals_.size() != posterior_.size()) throw DataError("goal and prior counts differ");
}

void GoalDirectedTracker::update(const DerivativeSample& s) {
  const Vec2 v = s.velocity();
  if (v.norm() < config_.min_speed) return;
  const std::size_t n = goals_.size();
  const double heading = std::atan2(v.y(), v.x());
  std::vector<double> next(n);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double stay = n > 1 ? (1.0 - config_.switch_prob) * posterior_[j] +
                                    config_.switch_prob * (1.0 - posterior_[j]) / static_cast<double>(n - 1)
                              : posterior_[j];
    const Vec2 to_goal = goals_[j] - s.location();
    double lik = 1.0;
    if (to_goal.norm() > 1e-6) {
      const double err = wrap_angle(heading - std::atan2(to_goal.y(), to_goal.x()));
      lik = std::exp(-0.5 * err * err / (config_.heading_sigma * config_.heading_sigma));
    }
    next[j] = stay * lik;
    total += next[j];
  }
  if (total > 0.0) {
    for (auto& p : next) p /= total;
    posterior_ = std::move(next);
  }
}

PredictionFan GoalDirectedTracker::predict(const Vec2& start, double speed, std::size_t k, double dt,
                                           double growth) const {
  PredictionFan fan;
  fan.dt = dt;
  fan.origin = start;
  for (std::size_t j = 0; j < goals_.size(); ++j) {
    FanBranch b{static_cast<int>(j), posterior_[j], {}};
    Vec2 pos = start;
    for (std::size_t i = 0; i < k; ++i) {
      const Vec2 to_goal = goals_[j] - pos;
      const double d = to_goal.norm();
      const double stepd = std::min(d, speed * dt);
      if (d > 1e-9) pos += stepd * to_goal / d;
      b.steps.push_back({pos, static_cast<double>(i + 1) * dt * dt * growth * Mat2::Identity()});
    }
    fan.branches.push_back(std::move(b));
  }
  return fan;
}

void write_prediction_csv(std::ostream& out, const PredictionFan& fan, bool header) {
  if (header) out << "step,pattern,weight,mean_x,mean_y,cov_xx,cov_xy,cov_yy\n";
  for (std::size_t k = 0; k < fan.horizon(); ++k) {
    for (const auto& b : fan.branches) {
      const auto& g = b.steps[k];
      out << k + 1 << ',' << b.pattern << ',' << b.weight << ',' << g.mean.x() << ',' << g.mean.y() << ','
          << g.cov(0, 0) << ',' << g.cov(0, 1) << ',' << g.cov(1, 1) << '\n';
    }
  }
}

}  // namespace flowpred
