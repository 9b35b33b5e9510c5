// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace flowpred {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"dpgp",
       {"seed", "sweeps", "alpha", "alpha_shape", "alpha_rate", "resample_alpha", "hyper_iterations",
        "final_hyper_iterations", "derivative_lag", "max_pattern_points"}},
      {"lrt", {"window", "m", "eta"}},
      {"online", {"changepoint", "novelty_commit_steps", "support", "hyper_iterations", "k_min"}},
      {"predict", {"horizon", "dt"}},
      {"planner", {"delta_s", "delta_p"}},
      {"eval", {"predictors", "cv_growth", "rms_every"}},
  };
  return keys;
}

template <class T>
void read(const pt::ptree& tree, const std::string& key, T& target, const std::string& source) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return;
  const auto parsed = pt::ptree(*v).get_value_optional<T>();
  if (!parsed) throw ConfigError(source + ": bad value '" + *v + "' for " + key);
  target = *parsed;
}

void read_bool(const pt::ptree& tree, const std::string& key, bool& target, const std::string& source) {
  const auto v = tree.get_optional<std::string>(key);
  if (!v) return;
  const std::string s = boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(*v));
  if (s == "true" || s == "1" || s == "yes") {
    target = true;
  } else if (s == "false" || s == "0" || s == "no") {
    target = false;
  } else {
    throw ConfigError(source + ": bad boolean '" + *v + "' for " + key);
  }
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  if (dpgp.sweeps == 0) throw ConfigError("dpgp.sweeps must be positive");
  if (!(dpgp.alpha > 0.0) || !(dpgp.alpha_shape > 0.0) || !(dpgp.alpha_rate > 0.0)) {
    throw ConfigError("dpgp alpha and its prior must be positive");
  }
  if (dpgp.derivative_lag == 0) throw ConfigError("dpgp.derivative_lag must be positive");
  if (dpgp.max_pattern_points == 0) throw ConfigError("dpgp.max_pattern_points must be positive");
  if (horizon == 0) throw ConfigError("predict.horizon must be positive");
  if (!(dt > 0.0)) throw ConfigError("predict.dt must be positive");
  if (rms_every == 0) throw ConfigError("eval.rms_every must be positive");
  if (!(cv_growth >= 0.0)) throw ConfigError("eval.cv_growth must be non-negative");
  if (predictors.empty()) throw ConfigError("eval.predictors is empty");
  online.validate();
  risk.validate();
}

EvalConfig RunConfig::eval_config() const {
  EvalConfig e;
  e.online = online;
  e.horizon = horizon;
  e.predictors = predictors;
  e.cv_growth = cv_growth;
  e.rms_every = rms_every;
  return e;
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  const auto& keys = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = keys.find(section);
    if (it == keys.end()) throw ConfigError(source + ": unknown section [" + section + "]");
    if (!body.data().empty()) throw ConfigError(source + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError(source + ": unknown key " + section + "." + key);
    }
  }

  RunConfig c;
  const pt::ptree empty;
  const auto section = [&](const char* name) -> const pt::ptree& {
    const auto s = tree.get_child_optional(name);
    return s ? *s : empty;
  };
  const auto& d = section("dpgp");
  read(d, "seed", c.dpgp.seed, source);
  read(d, "sweeps", c.dpgp.sweeps, source);
  read(d, "alpha", c.dpgp.alpha, source);
  read(d, "alpha_shape", c.dpgp.alpha_shape, source);
  read(d, "alpha_rate", c.dpgp.alpha_rate, source);
  read_bool(d, "resample_alpha", c.dpgp.resample_alpha, source);
  read(d, "hyper_iterations", c.dpgp.hyper_iterations, source);
  read(d, "final_hyper_iterations", c.dpgp.final_hyper_iterations, source);
  read(d, "derivative_lag", c.dpgp.derivative_lag, source);
  read(d, "max_pattern_points", c.dpgp.max_pattern_points, source);
  c.online.derivative_lag = c.dpgp.derivative_lag;
  c.online.max_pattern_points = c.dpgp.max_pattern_points;

  const auto& l = section("lrt");
  read(l, "window", c.online.lrt.window, source);
  read(l, "m", c.online.lrt.m, source);
  read(l, "eta", c.online.lrt.eta, source);

  const auto& o = section("online");
  read_bool(o, "changepoint", c.online.changepoint, source);
  read(o, "novelty_commit_steps", c.online.novelty_commit_steps, source);
  read(o, "support", c.online.support, source);
  read(o, "hyper_iterations", c.online.hyper_iterations, source);
  read(o, "k_min", c.k_min, source);

  const auto& p = section("predict");
  read(p, "horizon", c.horizon, source);
  read(p, "dt", c.dt, source);

  const auto& r = section("planner");
  read(r, "delta_s", c.risk.delta_s, source);
  read(r, "delta_p", c.risk.delta_p, source);

  const auto& e = section("eval");
  if (const auto v = e.get_optional<std::string>("predictors")) {
    std::vector<std::string> names;
    boost::algorithm::split(names, *v, boost::algorithm::is_any_of(","));
    c.predictors.clear();
    for (auto& n : names) {
      boost::algorithm::trim(n);
      if (n.empty()) continue;
      try {
        c.predictors.push_back(parse_predictor(n));
      } catch (const std::exception& ex) {
        throw ConfigError(source + ": " + ex.what());
      }
    }
  }
  read(e, "cv_growth", c.cv_growth, source);
  read(e, "rms_every", c.rms_every, source);

  try {
    c.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(source + ": " + ex.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_run_config(in, path.string());
}

void write_run_config(std::ostream& out, const RunConfig& c) {
  const auto b = [](bool v) { return v ? "true" : "false"; };
  out << "[dpgp]\n"
      << "seed = " << c.dpgp.seed << '\n'
      << "sweeps = " << c.dpgp.sweeps << '\n'
      << "alpha = " << num(c.dpgp.alpha) << '\n'
      << "alpha_shape = " << num(c.dpgp.alpha_shape) << '\n'
      << "alpha_rate = " << num(c.dpgp.alpha_rate) << '\n'
      << "resample_alpha = " << b(c.dpgp.resample_alpha) << '\n'
      << "hyper_iterations = " << c.dpgp.hyper_iterations << '\n'
      << "final_hyper_iterations = " << c.dpgp.final_hyper_iterations << '\n'
      << "derivative_lag = " << c.dpgp.derivative_lag << '\n'
      << "max_pattern_points = " << c.dpgp.max_pattern_points << "\n\n";
  out << "[lrt]\n"
      << "window = " << c.online.lrt.window << '\n'
      << "m = " << c.online.lrt.m << '\n'
      << "eta = " << num(c.online.lrt.eta) << "\n\n";
  out << "[online]\n"
      << "changepoint = " << b(c.online.changepoint) << '\n'
      << "novelty_commit_steps = " << c.online.novelty_commit_steps << '\n'
      << "support = " << num(c.online.support) << '\n'
      << "hyper_iterations = " << c.online.hyper_iterations << '\n'
      << "k_min = " << c.k_min << "\n\n";
  out << "[predict]\n"
      << "horizon = " << c.horizon << '\n'
      << "dt = " << num(c.dt) << "\n\n";
  out << "[planner]\n"
      << "delta_s = " << num(c.risk.delta_s) << '\n'
      << "delta_p = " << num(c.risk.delta_p) << "\n\n";
  out << "[eval]\npredictors = ";
  for (std::size_t i = 0; i < c.predictors.size(); ++i) out << (i ? "," : "") << to_string(c.predictors[i]);
  out << '\n'
      << "cv_growth = " << num(c.cv_growth) << '\n'
      << "rms_every = " << c.rms_every << '\n';
}

}  // namespace flowpred
