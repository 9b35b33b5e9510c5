// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowpred {

void LrtConfig::validate() const {
  if (window < 2) throw ConfigError("LRT window must hold at least 2 samples");
  if (m < 1) throw ConfigError("LRT averaging horizon m must be >= 1");
  if (!(eta > 0.0)) throw ConfigError("LRT threshold eta must be positive");
}

LrtState::LrtState(std::size_t m, double eta) : m_(m), eta_(eta) {
  if (m_ < 1) throw ConfigError("LRT averaging horizon m must be >= 1");
  if (!(eta_ > 0.0)) throw ConfigError("LRT threshold eta must be positive");
}

LrtDecision LrtState::record(double lrt, double reference) {
  history_.push_back(lrt);
  LrtDecision d;
  d.lrt = lrt;
  const std::size_t n = history_.size();
  const std::size_t recent = std::min(n, m_);
  d.l_m = std::accumulate(history_.end() - static_cast<std::ptrdiff_t>(recent), history_.end(), 0.0) /
          static_cast<double>(recent);
  if (n <= m_) {
    d.warmup = true;
    d.fits = true;
    return d;
  }
  d.l_ss = std::accumulate(history_.begin(), history_.end() - static_cast<std::ptrdiff_t>(m_), 0.0) /
           static_cast<double>(n - m_);
  d.fits = d.l_m - std::min(d.l_ss, reference) < eta_;
  return d;
}

std::optional<double> lrt_statistic(std::span<const DerivativeSample> window, const MotionPattern& pattern) {
  if (window.size() < 2) throw DataError("LRT needs at least two window samples");
  const bool degenerate = std::all_of(window.begin(), window.end(), [&](const DerivativeSample& s) {
    return s.x == window.front().x && s.y == window.front().y;
  });
  if (degenerate) return std::nullopt;

  const GpModel::Inputs x = sample_locations(window);
  double total = 0.0;
  for (Channel c : {Channel::dx, Channel::dy}) {
    const GpModel& w = c == Channel::dx ? pattern.gp_dx : pattern.gp_dy;
    const Eigen::VectorXd y = sample_targets(window, c);
    const GpModel s(x, y, w.hyper());
    total += s.log_joint_likelihood(x, y) - w.log_joint_likelihood(x, y);
  }
  return total / static_cast<double>(window.size());
}

LrtDecision lrt_step(std::span<const DerivativeSample> window, const MotionPattern& pattern, LrtState& state) {
  const auto lrt = lrt_statistic(window, pattern);
  if (!lrt) {
    LrtDecision d;
    d.degenerate = true;
    return d;
  }
  return state.record(*lrt, pattern.lrt_reference);
}

}  // namespace flowpred
