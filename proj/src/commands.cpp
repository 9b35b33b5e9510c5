// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/commands.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowpred/model_io.hpp"
#include "flowpred/run_config.hpp"
#include "flowpred/sim.hpp"

namespace flowpred {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Recorded inputs, resolved configuration and the command-specific arguments
// of one run.
struct Run {
  std::string command;
  json args = json::object();
  RunConfig config;
  json inputs = json::array();
  std::vector<std::string> outputs;
};

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void record_input(Run& run, const fs::path& path) {
  run.inputs.push_back({{"path", fs::absolute(path).lexically_normal().string()}, {"fnv1a", fnv1a_hex(read_bytes(path))}});
}

fs::path env_out_dir(const fs::path& requested) {
  if (const char* env = std::getenv("FLOWPRED_OUT_DIR"); env && *env) return fs::path(env);
  return requested;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string config_text(const RunConfig& c) {
  std::ostringstream s;
  write_run_config(s, c);
  return s.str();
}

void write_manifest(const fs::path& path, const Run& run) {
  json m;
  m["tool"] = "flowpred";
  m["version"] = FLOWPRED_VERSION;
  m["command"] = run.command;
  m["args"] = run.args;
  m["seed"] = run.args.contains("seed") ? run.args["seed"] : json(run.config.dpgp.seed);
  m["config"] = config_text(run.config);
  m["inputs"] = run.inputs;
  m["outputs"] = run.outputs;
  auto out = open_out(path);
  out << m.dump(2) << '\n';
}

fs::path manifest_beside(const fs::path& file) { return fs::path(file.string() + ".manifest.json"); }

// File outputs follow FLOWPRED_OUT_DIR by keeping their name.
fs::path resolve_out_file(const fs::path& requested) {
  if (const char* env = std::getenv("FLOWPRED_OUT_DIR"); env && *env) return fs::path(env) / requested.filename();
  return requested;
}

std::string arg_path(const json& args, const char* key) { return args.at(key).get<std::string>(); }

void run_train(Run& run, const fs::path& out_file, std::ostream& out) {
  const fs::path in = arg_path(run.args, "in");
  record_input(run, in);
  const auto corpus = load_trajectories(in);
  DpgpConfig cfg = run.config.dpgp;
  const std::string mode = run.args.value("mode", "dpgp");
  MixtureModel m;
  if (mode == "dpgp") {
    m = cluster_batch(corpus, cfg);
  } else if (mode == "labeled") {
    m = fit_labeled(corpus, cfg);
  } else {
    throw ConfigError("unknown training mode '" + mode + "'");
  }
  m.provenance.corpus_hash = corpus_hash(corpus);
  m.provenance.seed = cfg.seed;
  m.provenance.sweeps = mode == "dpgp" ? cfg.sweeps : 0;
  calibrate_references(m, corpus, run.config.online);
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  save_mixture(out_file, m);
  run.outputs = {out_file.filename().string()};
  write_manifest(manifest_beside(out_file), run);
  out << "M=" << m.size() << ", N=" << corpus.size() << '\n';
}

void run_reclassify(Run& run, const fs::path& out_file, std::ostream& out) {
  const fs::path model = arg_path(run.args, "model");
  const fs::path corpus_path = arg_path(run.args, "corpus");
  record_input(run, model);
  record_input(run, corpus_path);
  const auto mixture = load_mixture(model);
  const auto corpus = load_trajectories(corpus_path);
  const auto m = reclassify_training(mixture, corpus, run.config.k_min, run.config.online);
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  save_mixture(out_file, m);
  run.outputs = {out_file.filename().string()};
  write_manifest(manifest_beside(out_file), run);
  std::size_t n = 0;
  for (const auto& p : m.patterns) n += p.count();
  out << "M=" << m.size() << ", N=" << n << '\n';
}

void run_predict(Run& run, const fs::path& dir, std::ostream& out) {
  const fs::path model = arg_path(run.args, "model");
  const fs::path traj_path = arg_path(run.args, "trajectory");
  record_input(run, model);
  record_input(run, traj_path);
  MixtureModel mixture = load_mixture(model);
  const auto trajs = load_trajectories(traj_path);
  const std::string id = run.args.value("id", "");
  const Trajectory* traj = nullptr;
  for (const auto& t : trajs) {
    if (id.empty() || t.id == id) {
      traj = &t;
      break;
    }
  }
  if (!traj) throw DataError("no trajectory with id '" + id + "' in " + traj_path.string());
  std::size_t upto = traj->size();
  if (run.args.contains("at")) upto = std::min(upto, run.args["at"].get<std::size_t>() + 1);

  ensure_dir(dir);
  auto events = open_out(dir / "events.ndjson");
  AgentTracker tracker(traj->id, mixture, run.config.online);
  for (std::size_t i = 0; i < upto; ++i) {
    const auto& p = traj->points[i];
    const OnlineEvent e = tracker.observe(p.t, traj->position(i), mixture);
    if (e.kind != EventKind::none) {
      const auto post = tracker.posterior();
      write_event_record(events, e.time, traj->id, e.kind, tracker.model_set(), post);
    }
  }
  const PredictionFan fan = tracker_fan(tracker, mixture, run.config.horizon, run.config.dt);
  auto csv = open_out(dir / "prediction.csv");
  write_prediction_csv(csv, fan);
  run.outputs = {"prediction.csv", "events.ndjson"};
  write_manifest(dir / "manifest.json", run);
  out << "trajectory " << traj->id << ": " << upto << " observations, " << fan.branches.size() << " branches, "
      << run.config.horizon << " steps\n";
}

void run_eval(Run& run, const fs::path& dir, std::ostream& out) {
  const fs::path model = arg_path(run.args, "model");
  const fs::path corpus_path = arg_path(run.args, "corpus");
  record_input(run, model);
  record_input(run, corpus_path);
  const auto mixture = load_mixture(model);
  const auto corpus = load_trajectories(corpus_path);
  const auto result = run_prediction_eval(mixture, corpus, run.config.eval_config());
  ensure_dir(dir);
  {
    auto f = open_out(dir / "intent_curve.csv");
    write_intent_curve(f, result);
  }
  {
    auto f = open_out(dir / "rms_curve.csv");
    write_rms_curve(f, result);
  }
  run.outputs = {"intent_curve.csv", "rms_curve.csv"};
  write_manifest(dir / "manifest.json", run);
  for (std::size_t k = 0; k < result.predictors.size(); ++k) {
    std::vector<double> prob;
    std::vector<double> rms;
    for (const auto& tr : result.traces[k]) {
      prob.push_back(finite_mean(tr.correct_probability));
      rms.push_back(finite_mean(tr.rms));
    }
    out << to_string(result.predictors[k]) << ": mean correct-pattern probability " << finite_mean(prob)
        << ", mean rms " << finite_mean(rms) << '\n';
  }
}

void run_simulate(Run& run, const fs::path& dir, std::ostream& out) {
  const fs::path scenario_path = arg_path(run.args, "scenario");
  record_input(run, scenario_path);
  const Scenario scenario = load_scenario(scenario_path);
  MixtureModel mixture;
  if (run.args.contains("model")) {
    const fs::path model = arg_path(run.args, "model");
    record_input(run, model);
    mixture = load_mixture(model);
  } else {
    mixture = train_scenario(scenario);
  }
  const std::uint64_t seed = run.args.value("seed", scenario.seed);
  run.args["seed"] = seed;
  ensure_dir(dir);
  auto steps = open_out(dir / "steps.csv");
  auto events = open_out(dir / "events.ndjson");
  std::ostringstream info;
  const SimReport report = run_closed_loop(scenario, mixture, seed, {&steps, &events, &info});
  {
    auto f = open_out(dir / "report.json");
    write_report_json(f, report, seed);
  }
  {
    auto f = open_out(dir / "info.log");
    f << info.str();
  }
  run.outputs = {"report.json", "steps.csv", "events.ndjson", "info.log"};
  write_manifest(dir / "manifest.json", run);
  out << scenario.name << " seed " << seed << ": collisions=" << report.collisions
      << " goals_reached=" << report.goals_reached << " min_separation=" << report.min_separation
      << " patterns=" << report.patterns_start << "->" << report.patterns_end << '\n';
}

std::vector<Vec2> parse_points(const std::string& text) {
  std::vector<Vec2> pts;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ';')) {
    double x = 0.0;
    double y = 0.0;
    char comma = 0;
    std::istringstream p(item);
    if (!(p >> x >> comma >> y) || comma != ',') throw ConfigError("bad point list '" + text + "', expected x,y;x,y");
    pts.emplace_back(x, y);
  }
  if (pts.empty()) throw ConfigError("empty point list");
  return pts;
}

void run_generate(Run& run, const fs::path& out_file, std::ostream& out) {
  const fs::path scenario_path = arg_path(run.args, "scenario");
  record_input(run, scenario_path);
  Scenario scenario = load_scenario(scenario_path);
  if (run.args.contains("behaviors")) {
    scenario.training.behaviors = run.args["behaviors"].get<std::vector<std::string>>();
  }
  if (run.args.contains("per_behavior")) scenario.training.per_behavior = run.args["per_behavior"].get<std::size_t>();
  if (run.args.contains("seed")) scenario.training.seed = run.args["seed"].get<std::uint64_t>();
  std::optional<IntentSwitch> sw;
  if (run.args.contains("switch_time")) {
    IntentSwitch s;
    s.time = run.args["switch_time"].get<double>();
    s.waypoints = parse_points(run.args.value("switch_to", ""));
    s.label = run.args.value("switch_label", "");
    sw = s;
  }
  for (const auto& b : scenario.training.behaviors) {
    if (!scenario.behaviors.count(b)) throw ConfigError("unknown behavior '" + b + "'");
    if (sw) scenario.behaviors[b].intent_switch = sw;
  }
  const auto corpus = training_corpus(scenario);
  if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
  save_trajectories(out_file, corpus);
  run.outputs = {out_file.filename().string()};
  write_manifest(manifest_beside(out_file), run);
  out << "generated " << corpus.size() << " trajectories\n";
}

// Executes a run whose output location has been resolved.
void execute(Run& run, std::ostream& out) {
  const std::string& c = run.command;
  if (c == "train" || c == "reclassify" || c == "generate") {
    const fs::path file = run.args.at("out").get<std::string>();
    if (c == "train") run_train(run, file, out);
    if (c == "reclassify") run_reclassify(run, file, out);
    if (c == "generate") run_generate(run, file, out);
    return;
  }
  const fs::path dir = run.args.at("out_dir").get<std::string>();
  if (c == "predict") {
    run_predict(run, dir, out);
  } else if (c == "eval") {
    run_eval(run, dir, out);
  } else if (c == "simulate") {
    run_simulate(run, dir, out);
  } else {
    throw ConfigError("unknown command '" + c + "' in manifest");
  }
}

void rerun(const fs::path& manifest_path, const std::string& out_override, std::ostream& out) {
  json m;
  try {
    m = json::parse(read_bytes(manifest_path));
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  Run run;
  try {
    run.command = m.at("command").get<std::string>();
    run.args = m.at("args");
    std::istringstream cfg(m.at("config").get<std::string>());
    run.config = parse_run_config(cfg, manifest_path.string());
    for (const auto& in : m.at("inputs")) {
      const fs::path p = in.at("path").get<std::string>();
      if (fnv1a_hex(read_bytes(p)) != in.at("fnv1a").get<std::string>()) {
        throw DataError("input " + p.string() + " changed since the recorded run");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  fs::path dir = out_override.empty() ? fs::path() : fs::path(out_override);
  if (const char* env = std::getenv("FLOWPRED_OUT_DIR"); env && *env) dir = env;
  if (!dir.empty()) {
    if (run.args.contains("out_dir")) {
      run.args["out_dir"] = dir.string();
    } else {
      run.args["out"] = (dir / fs::path(run.args.at("out").get<std::string>()).filename()).string();
    }
  }
  execute(run, out);
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Motion pattern learning, changepoint-aware prediction and risk-bounded planning", "flowpred"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(FLOWPRED_VERSION));

  std::string config_path;
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
  };

  std::string in, out_path, model, corpus, trajectory, scenario, out_dir = "out", id, predictors, mode = "dpgp";
  std::string switch_to, switch_label, manifest;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sweeps, k_min, horizon, at, per_behavior;
  std::optional<double> eta, switch_time;
  std::vector<std::string> behaviors;
  bool no_changepoint = false;

  auto* train = app.add_subcommand("train", "Cluster a trajectory CSV into a mixture model");
  train->add_option("--in", in, "trajectory CSV (id,t,x,y[,label])")->required();
  train->add_option("--out", out_path, "mixture model file")->required();
  train->add_option("--seed", seed, "sampler seed");
  train->add_option("--sweeps", sweeps, "Gibbs sweeps");
  train->add_option("--mode", mode, "dpgp or labeled")->check(CLI::IsMember({"dpgp", "labeled"}));
  add_config(train);

  auto* reclassify = app.add_subcommand("reclassify", "Drop small patterns and reassign their segments");
  reclassify->add_option("--model", model, "mixture model file")->required();
  reclassify->add_option("--corpus", corpus, "training trajectory CSV")->required();
  reclassify->add_option("--out", out_path, "output mixture model file")->required();
  reclassify->add_option("--k-min", k_min, "patterns with at most this many members are dropped");
  add_config(reclassify);

  auto* predict = app.add_subcommand("predict", "Classify one trajectory online and predict its future");
  predict->add_option("--model", model, "mixture model file")->required();
  predict->add_option("--trajectory", trajectory, "trajectory CSV")->required();
  predict->add_option("--id", id, "trajectory id (default: first)");
  predict->add_option("--at", at, "last observation index used (default: all)");
  predict->add_option("--horizon", horizon, "prediction steps");
  predict->add_option("--out-dir", out_dir, "output directory");
  predict->add_flag("--no-changepoint", no_changepoint, "plain DPGP posterior");
  add_config(predict);

  auto* eval = app.add_subcommand("eval", "Intent and RMS curves over a labeled test corpus");
  eval->add_option("--model", model, "mixture model file")->required();
  eval->add_option("--corpus", corpus, "labeled test trajectory CSV")->required();
  eval->add_option("--out-dir", out_dir, "output directory");
  eval->add_option("--predictors", predictors, "comma list of changepoint_dpgp,dpgp,constant_velocity,goal_directed");
  eval->add_option("--horizon", horizon, "prediction steps");
  add_config(eval);

  auto* simulate = app.add_subcommand("simulate", "Closed-loop rover simulation of a scenario");
  simulate->add_option("--scenario", scenario, "scenario JSON")->required();
  simulate->add_option("--model", model, "mixture model file (default: train from the scenario)");
  simulate->add_option("--seed", seed, "simulation seed (default: the scenario's)");
  simulate->add_option("--out-dir", out_dir, "output directory");

  auto* generate = app.add_subcommand("generate", "Synthetic labeled corpus from a scenario's behaviors");
  generate->add_option("--scenario", scenario, "scenario JSON")->required();
  generate->add_option("--out", out_path, "trajectory CSV")->required();
  generate->add_option("--behaviors", behaviors, "behaviors to sample (default: the training set)")->delimiter(',');
  generate->add_option("--per-behavior", per_behavior, "trajectories per behavior");
  generate->add_option("--seed", seed, "generator seed");
  generate->add_option("--switch-time", switch_time, "seconds after start of a scripted intent switch");
  generate->add_option("--switch-to", switch_to, "waypoints after the switch, x,y;x,y");
  generate->add_option("--switch-label", switch_label, "label after the switch");

  auto* rerun_cmd = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rerun_cmd->add_option("--manifest", manifest, "manifest file")->required()->check(CLI::ExistingFile);
  rerun_cmd->add_option("--out-dir", out_dir, "output directory (default: the recorded one)");

  for (auto* sub : {train, reclassify, predict, eval})
    sub->add_option("--eta", eta, "LRT threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << FLOWPRED_VERSION << '\n';
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return exit_usage;
  }

  try {
    if (rerun_cmd->parsed()) {
      rerun(manifest, rerun_cmd->count("--out-dir") ? out_dir : std::string(), out);
      return exit_ok;
    }
    Run run;
    run.config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (eta) run.config.online.lrt.eta = *eta;
    if (k_min) run.config.k_min = *k_min;
    if (horizon) run.config.horizon = *horizon;
    if (no_changepoint) run.config.online.changepoint = false;
    if (!predictors.empty()) {
      std::istringstream cfg("[eval]\npredictors = " + predictors + '\n');
      run.config.predictors = parse_run_config(cfg, "--predictors").predictors;
    }
    const auto abs = [](const std::string& p) { return fs::absolute(p).lexically_normal().string(); };
    if (train->parsed()) {
      run.command = "train";
      if (seed) run.config.dpgp.seed = *seed;
      if (sweeps) run.config.dpgp.sweeps = *sweeps;
      run.args = {{"in", abs(in)}, {"out", abs(resolve_out_file(out_path).string())}, {"mode", mode}};
    } else if (reclassify->parsed()) {
      run.command = "reclassify";
      run.args = {{"model", abs(model)}, {"corpus", abs(corpus)}, {"out", abs(resolve_out_file(out_path).string())}};
    } else if (predict->parsed()) {
      run.command = "predict";
      run.args = {{"model", abs(model)}, {"trajectory", abs(trajectory)}, {"out_dir", abs(env_out_dir(out_dir).string())}};
      if (!id.empty()) run.args["id"] = id;
      if (at) run.args["at"] = *at;
    } else if (eval->parsed()) {
      run.command = "eval";
      run.args = {{"model", abs(model)}, {"corpus", abs(corpus)}, {"out_dir", abs(env_out_dir(out_dir).string())}};
    } else if (simulate->parsed()) {
      run.command = "simulate";
      run.args = {{"scenario", abs(scenario)}, {"out_dir", abs(env_out_dir(out_dir).string())}};
      if (!model.empty()) run.args["model"] = abs(model);
      if (seed) run.args["seed"] = *seed;
    } else if (generate->parsed()) {
      run.command = "generate";
      run.args = {{"scenario", abs(scenario)}, {"out", abs(resolve_out_file(out_path).string())}};
      if (!behaviors.empty()) run.args["behaviors"] = behaviors;
      if (per_behavior) run.args["per_behavior"] = *per_behavior;
      if (seed) run.args["seed"] = *seed;
      if (switch_time) {
        run.args["switch_time"] = *switch_time;
        run.args["switch_to"] = switch_to;
        run.args["switch_label"] = switch_label;
      } else if (!switch_to.empty()) {
        throw ConfigError("--switch-to needs --switch-time");
      }
    }
    run.config.validate();
    execute(run, out);
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_data;
  }
}

}  // namespace flowpred
