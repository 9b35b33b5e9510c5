// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/dpgp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace flowpred {

void MotionPattern::refit(const Hyperparameters& hx, const Hyperparameters& hy) {
  if (samples.empty()) {
    gp_dx = GpModel(hx);
    gp_dy = GpModel(hy);
    return;
  }
  const GpModel::Inputs x = sample_locations(samples);
  gp_dx = GpModel(x, sample_targets(samples, Channel::dx), hx);
  gp_dy = GpModel(x, sample_targets(samples, Channel::dy), hy);
}

double MotionPattern::sample_log_density(const DerivativeSample& s) const {
  const Vec2 q = s.location();
  return gp_dx.log_predictive_density(q, s.dx) + gp_dy.log_predictive_density(q, s.dy);
}

double MotionPattern::unexplained_variance(const Vec2& q) const {
  double total = 0.0;
  for (const GpModel* g : {&gp_dx, &gp_dy}) {
    const Hyperparameters& h = g->hyper();
    total += std::clamp((g->predict(q).variance - h.noise_variance) / h.signal_variance, 0.0, 1.0);
  }
  return 0.5 * total;
}

double MotionPattern::log_likelihood(std::span<const DerivativeSample> s) const {
  double total = 0.0;
  for (const auto& d : s) total += sample_log_density(d);
  return total;
}

void MixtureModel::reset_priors_from_counts() {
  priors.assign(patterns.size(), 0.0);
  double total = 0.0;
  for (const auto& p : patterns) total += static_cast<double>(p.count());
  for (std::size_t j = 0; j < patterns.size(); ++j) {
    priors[j] = total > 0 ? static_cast<double>(patterns[j].count()) / total : 1.0 / patterns.size();
  }
}

void MixtureModel::validate() const {
  if (priors.size() != patterns.size()) throw DataError("mixture priors do not match pattern count");
  double sum = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("mixture prior is negative or non-finite");
    sum += p;
  }
  if (!patterns.empty() && std::abs(sum - 1.0) > 1e-9) throw DataError("mixture priors do not sum to one");
  if (!(alpha > 0.0)) throw DataError("mixture concentration must be positive");
}

std::size_t MixtureModel::find_label(const std::string& label) const {
  for (std::size_t j = 0; j < patterns.size(); ++j) {
    if (patterns[j].label == label) return j;
  }
  return patterns.size();
}


std::vector<DerivativeSample> lagged_samples(const Trajectory& traj, std::size_t lag) {
  if (lag <= 1) return estimate_derivatives(traj);
  Trajectory coarse;
  coarse.id = traj.id;
  for (std::size_t i = 0; i < traj.size(); i += lag) coarse.points.push_back(traj.points[i]);
  if ((traj.size() - 1) % lag != 0) coarse.points.push_back(traj.points.back());
  if (coarse.size() < 2) return estimate_derivatives(traj);
  return estimate_derivatives(coarse);
}

std::string majority_label(const Trajectory& traj) {
  if (!traj.labeled()) return {};
  std::map<std::string, std::size_t> counts;
  for (const auto& l : traj.labels) ++counts[l];
  return std::max_element(counts.begin(), counts.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second; })
      ->first;
}

double trajectory_likelihood(const MotionPattern& pattern, std::span<const DerivativeSample> samples) {
  return pattern.log_likelihood(samples);
}

std::vector<double> assignment_probabilities(std::span<const double> log_likelihoods,
                                             std::span<const std::size_t> counts, double log_likelihood_new,
                                             double alpha) {
  if (log_likelihoods.size() != counts.size()) throw DataError("likelihood/count size mismatch");
  const std::size_t m = counts.size();
  const double n_minus_one = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  const double denom = std::log(n_minus_one + alpha);
  std::vector<double> logw(m + 1);
  for (std::size_t j = 0; j < m; ++j) {
    logw[j] = counts[j] > 0 ? log_likelihoods[j] + std::log(static_cast<double>(counts[j])) - denom
                            : -std::numeric_limits<double>::infinity();
  }
  logw[m] = alpha > 0 ? log_likelihood_new + std::log(alpha) - denom : -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> p(m + 1);
  double sum = 0.0;
  for (std::size_t j = 0; j <= m; ++j) {
    p[j] = std::isfinite(logw[j]) ? std::exp(logw[j] - top) : 0.0;
    sum += p[j];
  }
  for (double& v : p) v /= sum;
  return p;
}

double resample_alpha(double alpha, std::size_t m, std::size_t n, std::mt19937_64& rng, double shape, double rate) {
  if (m < 1 || n < 1) throw DataError("resample_alpha requires M >= 1 and N >= 1");
  // eta ~ Beta(alpha + 1, N) via two gamma draws.
  std::gamma_distribution<double> ga(alpha + 1.0, 1.0);
  std::gamma_distribution<double> gb(static_cast<double>(n), 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  const double eta = std::clamp(a / (a + b), 1e-300, 1.0);
  const double r = rate - std::log(eta);
  const double odds = (shape + static_cast<double>(m) - 1.0) / (static_cast<double>(n) * r);
  const double pi = odds / (1.0 + odds);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double k = u(rng) < pi ? shape + static_cast<double>(m) : shape + static_cast<double>(m) - 1.0;
  std::gamma_distribution<double> g(std::max(k, 1e-12), 1.0 / r);
  return std::max(g(rng), 1e-12);
}

namespace {

// Fills members, goal and label from the member trajectories, then fits the
// GPs on the capped sample pool.
MotionPattern assemble_pattern(const std::vector<const Trajectory*>& members, std::vector<DerivativeSample> pool,
                               std::size_t cap, const Hyperparameters& hx, const Hyperparameters& hy) {
  MotionPattern p;
  std::map<std::string, std::size_t> labels;
  Vec2 goal = Vec2::Zero();
  for (const Trajectory* t : members) {
    p.members.push_back(t->id);
    goal += t->position(t->size() - 1);
    const std::string l = majority_label(*t);
    if (!l.empty()) ++labels[l];
  }
  if (!members.empty()) p.goal = goal / static_cast<double>(members.size());
  if (!labels.empty()) {
    p.label = std::max_element(labels.begin(), labels.end(),
                               [](const auto& a, const auto& b) { return a.second < b.second; })
                  ->first;
  }
  p.samples = cap_samples(pool, cap);
  p.refit(hx, hy);
  return p;
}

}  // namespace

MotionPattern build_pattern(std::span<const Trajectory> trajectories, std::size_t lag, std::size_t cap,
                            const Hyperparameters& hx, const Hyperparameters& hy) {
  std::vector<const Trajectory*> members;
  std::vector<DerivativeSample> pool;
  for (const auto& t : trajectories) {
    members.push_back(&t);
    const auto s = lagged_samples(t, lag);
    pool.insert(pool.end(), s.begin(), s.end());
  }
  return assemble_pattern(members, std::move(pool), cap, hx, hy);
}

DpgpSampler::DpgpSampler(std::span<const Trajectory> trajectories, const DpgpConfig& config)
    : trajectories_(trajectories), config_(config), rng_(config.seed) {
  if (trajectories.empty()) throw DataError("clustering requires at least one trajectory");
  if (!(config.alpha > 0.0)) throw ConfigError("initial alpha must be positive");
  samples_.reserve(trajectories.size());
  for (const auto& t : trajectories) samples_.push_back(lagged_samples(t, config.derivative_lag));
  state_.assignments.assign(trajectories.size(), 0);
  state_.alpha = config.alpha;
  state_.rng_seed = config.seed;
}

void DpgpSampler::rebuild(Cluster& c) const {
  std::vector<const Trajectory*> members;
  std::vector<DerivativeSample> pool;
  for (std::size_t i : c.members) {
    members.push_back(&trajectories_[i]);
    pool.insert(pool.end(), samples_[i].begin(), samples_[i].end());
  }
  c.pattern = assemble_pattern(members, std::move(pool), config_.max_pattern_points, c.pattern.gp_dx.hyper(),
                               c.pattern.gp_dy.hyper());
}

double DpgpSampler::new_pattern_log_likelihood(std::size_t i) const {
  MotionPattern prior;
  prior.gp_dx = GpModel(config_.new_pattern_hyper);
  prior.gp_dy = GpModel(config_.new_pattern_hyper);
  if (config_.joint_new_likelihood) {
    const auto x = sample_locations(samples_[i]);
    return prior.gp_dx.log_joint_likelihood(x, sample_targets(samples_[i], Channel::dx)) +
           prior.gp_dy.log_joint_likelihood(x, sample_targets(samples_[i], Channel::dy));
  }
  return prior.log_likelihood(samples_[i]);
}

void DpgpSampler::place(std::size_t i) {
  std::vector<double> ll(clusters_.size());
  std::vector<std::size_t> counts(clusters_.size());
  for (std::size_t j = 0; j < clusters_.size(); ++j) {
    ll[j] = clusters_[j].pattern.log_likelihood(samples_[i]);
    counts[j] = clusters_[j].members.size();
  }
  const auto p = assignment_probabilities(ll, counts, new_pattern_log_likelihood(i), state_.alpha);
  std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
  const std::size_t j = pick(rng_);
  if (j == clusters_.size()) {
    Cluster c;
    c.pattern.gp_dx = GpModel(config_.new_pattern_hyper);
    c.pattern.gp_dy = GpModel(config_.new_pattern_hyper);
    clusters_.push_back(std::move(c));
  }
  clusters_[j].members.push_back(i);
  rebuild(clusters_[j]);
  state_.assignments[i] = j;
}

void DpgpSampler::initialize() {
  clusters_.clear();
  std::vector<std::size_t> order(trajectories_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  for (std::size_t i : order) place(i);
}

void DpgpSampler::sweep() {
  if (clusters_.empty()) initialize();
  std::vector<std::size_t> order(trajectories_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  for (std::size_t i : order) {
    const std::size_t c = state_.assignments[i];
    auto& members = clusters_[c].members;
    members.erase(std::find(members.begin(), members.end(), i));
    if (members.empty()) {
      clusters_.erase(clusters_.begin() + static_cast<std::ptrdiff_t>(c));
      for (auto& z : state_.assignments) {
        if (z > c) --z;
      }
    } else {
      rebuild(clusters_[c]);
    }
    place(i);
  }

  if (config_.optimize_hyper) {
    OptimizerOptions opts;
    opts.max_iterations = config_.hyper_iterations;
    opts.bounds = config_.hyper_bounds;
    for (auto& c : clusters_) {
      const auto& s = c.pattern.samples;
      if (s.size() < 2) continue;
      const Hyperparameters hx = optimize_hyperparameters(s, Channel::dx, c.pattern.gp_dx.hyper(), opts);
      const Hyperparameters hy = optimize_hyperparameters(s, Channel::dy, c.pattern.gp_dy.hyper(), opts);
      c.pattern.refit(hx, hy);
    }
  }
  if (config_.resample_alpha) {
    state_.alpha = resample_alpha(state_.alpha, clusters_.size(), trajectories_.size(), rng_, config_.alpha_shape,
                                  config_.alpha_rate);
  }
}

void DpgpSampler::run() {
  initialize();
  for (std::size_t s = 0; s < config_.sweeps; ++s) sweep();
}

MixtureModel DpgpSampler::model() const {
  MixtureModel m;
  OptimizerOptions opts;
  opts.max_iterations = config_.final_hyper_iterations;
  opts.bounds = config_.hyper_bounds;
  opts.min_improvement = 1e-4;
  for (const auto& c : clusters_) {
    MotionPattern p = c.pattern;
    if (p.samples.size() >= 2 && config_.optimize_hyper) {
      const Hyperparameters hx = optimize_hyperparameters(p.samples, Channel::dx, p.gp_dx.hyper(), opts);
      const Hyperparameters hy = optimize_hyperparameters(p.samples, Channel::dy, p.gp_dy.hyper(), opts);
      p.refit(hx, hy);
    }
    m.patterns.push_back(std::move(p));
  }
  m.alpha = state_.alpha;
  m.provenance.seed = config_.seed;
  m.provenance.sweeps = config_.sweeps;
  m.reset_priors_from_counts();
  return m;
}

MixtureModel fit_labeled(std::span<const Trajectory> trajectories, const DpgpConfig& config) {
  if (trajectories.empty()) throw DataError("labeled fit requires at least one trajectory");
  std::map<std::string, std::vector<Trajectory>> groups;
  std::vector<std::string> order;
  for (const auto& t : trajectories) {
    const std::string l = majority_label(t);
    if (l.empty()) throw DataError("trajectory '" + t.id + "' has no label");
    if (!groups.count(l)) order.push_back(l);
    groups[l].push_back(t);
  }
  OptimizerOptions opts;
  opts.max_iterations = config.final_hyper_iterations;
  opts.bounds = config.hyper_bounds;
  opts.min_improvement = 1e-4;
  MixtureModel m;
  for (const auto& l : order) {
    MotionPattern p = build_pattern(groups[l], config.derivative_lag, config.max_pattern_points,
                                    config.new_pattern_hyper, config.new_pattern_hyper);
    if (p.samples.size() >= 2 && config.optimize_hyper) {
      const Hyperparameters hx = optimize_hyperparameters(p.samples, Channel::dx, p.gp_dx.hyper(), opts);
      const Hyperparameters hy = optimize_hyperparameters(p.samples, Channel::dy, p.gp_dy.hyper(), opts);
      p.refit(hx, hy);
    }
    m.patterns.push_back(std::move(p));
  }
  m.alpha = config.alpha;
  m.provenance.seed = config.seed;
  m.reset_priors_from_counts();
  return m;
}

MixtureModel cluster_batch(std::span<const Trajectory> trajectories, const DpgpConfig& config) {
  DpgpSampler sampler(trajectories, config);
  sampler.run();
  return sampler.model();
}

}  // namespace flowpred
