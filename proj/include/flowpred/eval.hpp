// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flowpred/online.hpp"
#include "flowpred/predict.hpp"

namespace flowpred {

enum class PredictorKind { changepoint_dpgp, dpgp, constant_velocity, goal_directed };

const char* to_string(PredictorKind kind);
// Throws ConfigError for unknown names.
PredictorKind parse_predictor(const std::string& name);
std::vector<PredictorKind> all_predictors();

/// Per-step variance growth of the constant-velocity fallback: the noise
/// variance of the pattern whose data lies closest to `position`.
double fallback_growth(const MixtureModel& mixture, const Vec2& position);

/// Current fan of a tracker: the mixture prediction, or constant velocity
/// while the newest window fits no pattern or before any sample exists.
PredictionFan tracker_fan(const AgentTracker& tracker, const MixtureModel& mixture, std::size_t k, double dt);

struct EvalConfig {
  OnlineConfig online;
  std::size_t horizon = 20;
  std::vector<PredictorKind> predictors = all_predictors();
  GoalDirectedConfig goal;
  double cv_growth = 0.05;  // (m/s)^2 per step for the constant-velocity baseline
  // RMS is evaluated at every n-th observation.
  std::size_t rms_every = 1;

  void validate() const;
};

/// One predictor on one labeled trajectory. Entries are NaN where undefined:
/// probability when the true label has no pattern (or the predictor has no
/// posterior), RMS when fewer than `horizon` observations remain.
struct TrialTrace {
  std::string trajectory;
  std::vector<double> time;  // since the first observation
  std::vector<double> correct_probability;
  std::vector<double> rms;
  std::vector<std::size_t> intent_changes;  // observation indices
  std::vector<std::size_t> novelty_starts;
};

struct EvalResult {
  std::vector<PredictorKind> predictors;
  std::vector<std::vector<TrialTrace>> traces;  // [predictor][trial]

  const std::vector<TrialTrace>& of(PredictorKind kind) const;
};

/// Replays each trajectory through every configured predictor. Trials run
/// concurrently; results do not depend on scheduling.
EvalResult run_prediction_eval(const MixtureModel& mixture, std::span<const Trajectory> trials,
                               const EvalConfig& config);

struct CurvePoint {
  std::size_t step = 0;
  double time = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

/// Mean and standard deviation across trials per observation index, skipping NaN.
std::vector<CurvePoint> mean_curve(std::span<const TrialTrace> traces, bool rms);

// Columns: predictor,step,time,mean,sd,count
void write_intent_curve(std::ostream& out, const EvalResult& result);
void write_rms_curve(std::ostream& out, const EvalResult& result);

/// Mean of the finite entries of `values` from index `from` on; NaN if none.
double finite_mean(std::span<const double> values, std::size_t from = 0);

}  // namespace flowpred
