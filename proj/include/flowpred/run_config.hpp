// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "flowpred/dpgp.hpp"
#include "flowpred/eval.hpp"
#include "flowpred/online.hpp"
#include "flowpred/planner.hpp"

namespace flowpred {

/// Parameters shared by every command. The file form is INI with one
/// section per module:
///
///   [dpgp]    seed sweeps alpha alpha_shape alpha_rate resample_alpha
///             hyper_iterations final_hyper_iterations derivative_lag
///             max_pattern_points
///   [lrt]     window m eta
///   [online]  changepoint novelty_commit_steps support hyper_iterations k_min
///   [predict] horizon dt
///   [planner] delta_s delta_p
///   [eval]    predictors cv_growth rms_every
///
/// Missing keys keep their defaults; unknown sections or keys are errors.
struct RunConfig {
  DpgpConfig dpgp;
  OnlineConfig online;
  std::size_t k_min = 2;
  std::size_t horizon = 20;
  double dt = 0.1;
  RiskConfig risk;
  std::vector<PredictorKind> predictors = all_predictors();
  double cv_growth = 0.05;
  std::size_t rms_every = 1;

  // Throws ConfigError.
  void validate() const;
  EvalConfig eval_config() const;
};

RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);
/// Full INI document; parsing it back yields the same configuration.
void write_run_config(std::ostream& out, const RunConfig& config);

}  // namespace flowpred
