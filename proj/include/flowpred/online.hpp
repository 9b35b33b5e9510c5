// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowpred/changepoint.hpp"
#include "flowpred/dpgp.hpp"

namespace flowpred {

struct OnlineConfig {
  LrtConfig lrt;
  // false: plain DPGP, the posterior accumulates over the whole history.
  bool changepoint = true;
  // An empty model set must persist this many steps before the episode is
  // treated as a new behavior; shorter gaps are transitions between patterns.
  std::size_t novelty_commit_steps = 30;
  // Derivative samples difference observations this far apart, matching the
  // lag the patterns were trained with.
  std::size_t derivative_lag = 10;
  std::size_t max_pattern_points = 400;
  // Hyperparameter ascent for patterns learned online.
  std::size_t hyper_iterations = 200;
  HyperBounds hyper_bounds{1.0, 20.0, 1e-6, 4.0};
  // A pattern only joins the model set where its unexplained variance at the
  // newest window sample is at most this; far from its data any pattern
  // degrades to the broad prior and the LRT cannot reject it.
  double support = 0.5;

  void validate() const;
};

enum class EventKind { none, intent_change, novelty_started, novelty_learned };
const char* to_string(EventKind kind);

struct OnlineEvent {
  EventKind kind = EventKind::none;
  double time = 0.0;
};

/// Per-agent online classifier.
class AgentTracker {
 public:
  AgentTracker(std::string agent_id, const MixtureModel& mixture, const OnlineConfig& config);

  /// Raw position observation. Once more than derivative_lag observations
  /// are recorded, the lagged derivative ending here is formed and processed.
  OnlineEvent observe(double t, const Vec2& position, const MixtureModel& mixture);
  /// Processes one derivative sample observed at time t.
  OnlineEvent step(const DerivativeSample& sample, double t, const MixtureModel& mixture);

  /// Extends the posterior and LRT bookkeeping to patterns appended to the
  /// mixture since construction.
  void sync(const MixtureModel& mixture);

  const std::string& agent_id() const { return agent_id_; }
  const std::vector<std::size_t>& model_set() const { return model_set_; }
  std::vector<double> posterior() const;
  const std::vector<DerivativeSample>& history() const { return history_; }
  const Trajectory& observed() const { return observed_; }
  const Window& window() const { return window_; }
  std::size_t segment_start() const { return segment_start_; }
  bool novelty() const { return novelty_flag_; }
  bool novelty_committed() const { return novelty_committed_; }
  // The most recent window fit no pattern.
  bool unexplained() const { return empty_steps_ > 0; }
  const std::vector<LrtState>& lrt_states() const { return lrt_states_; }
  const std::vector<LrtDecision>& last_decisions() const { return last_decisions_; }
  std::size_t steps() const { return history_.size(); }

 private:
  void reset_to_priors(const MixtureModel& mixture);
  void update_posterior(const DerivativeSample& s, const MixtureModel& mixture);

  std::string agent_id_;
  OnlineConfig config_;
  Window window_;
  std::vector<std::size_t> model_set_;
  std::vector<LrtState> lrt_states_;
  std::vector<LrtDecision> last_decisions_;
  std::vector<double> log_posterior_;
  std::size_t segment_start_ = 0;
  std::vector<DerivativeSample> history_;
  Trajectory observed_;
  bool novelty_flag_ = false;
  bool novelty_committed_ = false;
  std::size_t empty_steps_ = 0;
};

/// Runs the LRT of the window against every pattern and returns the indices
/// whose decision is fits=true and whose data supports the newest sample.
/// Degenerate windows keep a pattern's membership in `previous`.
std::vector<std::size_t> compare_to_models(std::span<const DerivativeSample> window, const MixtureModel& mixture,
                                           std::vector<LrtState>& states, std::span<const std::size_t> previous,
                                           double support = 1.0, std::vector<LrtDecision>* decisions = nullptr);

/// p_t(b_j) proportional to p_{t-1}(b_j) times the sample's predictive
/// density under b_j, computed in log space.
std::vector<double> posterior_update(std::span<const double> posterior, const DerivativeSample& sample,
                                     const MixtureModel& mixture);

/// Learns a pattern from the tracker's full observed history when a novelty
/// episode was committed. Returns the index of the new pattern.
std::optional<std::size_t> finalize_trajectory(const AgentTracker& tracker, MixtureModel& mixture,
                                               const OnlineConfig& config, std::ostream* log = nullptr);

/// Mean LRT statistic of in-pattern windows replayed from the given
/// trajectories (every `every`-th window).
double lrt_reference(const MotionPattern& pattern, std::span<const Trajectory> trajectories,
                     const OnlineConfig& config, std::size_t every = 5);

/// Recomputes every pattern's reference from its member trajectories; members
/// missing from `trajectories` are skipped.
void calibrate_references(MixtureModel& mixture, std::span<const Trajectory> trajectories,
                          const OnlineConfig& config);

/// Drops patterns with at most k_min members and redistributes the segments
/// of their trajectories (split at detected intent changes) to the most
/// likely surviving pattern.
MixtureModel reclassify_training(const MixtureModel& mixture, std::span<const Trajectory> trajectories,
                                 std::size_t k_min, const OnlineConfig& config);

/// One NDJSON event-log record.
void write_event_record(std::ostream& out, double time, const std::string& agent, EventKind kind,
                        std::span<const std::size_t> model_set, std::span<const double> posterior);

}  // namespace flowpred
