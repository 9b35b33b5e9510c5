// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "flowpred/dpgp.hpp"

namespace flowpred {

struct LrtConfig {
  std::size_t window = 15;  // m_S
  std::size_t m = 5;        // averaging horizon
  double eta = 1.0;         // threshold on l_m - l_ss

  void validate() const;
};

struct LrtDecision {
  double lrt = 0.0;
  double l_m = 0.0;
  double l_ss = std::numeric_limits<double>::quiet_NaN();  // NaN during warm-up
  bool fits = true;
  bool warmup = false;
  bool degenerate = false;  // window carried no spatial information; state untouched
};

/// LRT history of one (agent, pattern) pair since the last changepoint.
class LrtState {
 public:
  explicit LrtState(std::size_t m = 5, double eta = 1.0);

  void reset() { history_.clear(); }
  std::size_t steps() const { return history_.size(); }
  const std::vector<double>& history() const { return history_; }
  std::size_t m() const { return m_; }
  double eta() const { return eta_; }

  /// Appends `lrt` and decides. With a finite `reference`, the
  /// since-changepoint mean is capped at it, so a pattern that never fit
  /// since the last reset cannot pass by being consistently bad.
  LrtDecision record(double lrt, double reference = std::numeric_limits<double>::infinity());

 private:
  std::size_t m_;
  double eta_;
  std::vector<double> history_;
};

/// Normalized log-likelihood ratio of the window under a GP refit on the
/// window itself (same hyperparameters as the pattern) versus the pattern,
/// summed over both channels. Empty when all window locations coincide.
std::optional<double> lrt_statistic(std::span<const DerivativeSample> window, const MotionPattern& pattern);

/// One test step. Requires at least two samples.
LrtDecision lrt_step(std::span<const DerivativeSample> window, const MotionPattern& pattern, LrtState& state);

}  // namespace flowpred
