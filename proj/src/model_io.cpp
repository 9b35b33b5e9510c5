// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace flowpred {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "flowpred-mixture";
constexpr int kVersion = 1;

json hyper_json(const Hyperparameters& h) {
  return {{"length_scale_x", h.length_scale_x},
          {"length_scale_y", h.length_scale_y},
          {"signal_variance", h.signal_variance},
          {"noise_variance", h.noise_variance}};
}

Hyperparameters hyper_from(const json& j) {
  Hyperparameters h;
  h.length_scale_x = j.at("length_scale_x").get<double>();
  h.length_scale_y = j.at("length_scale_y").get<double>();
  h.signal_variance = j.at("signal_variance").get<double>();
  h.noise_variance = j.at("noise_variance").get<double>();
  h.validate();
  return h;
}

}  // namespace

void write_mixture(std::ostream& out, const MixtureModel& mixture) {
  mixture.validate();
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["alpha"] = mixture.alpha;
  j["priors"] = mixture.priors;
  j["provenance"] = {{"corpus_hash", mixture.provenance.corpus_hash},
                     {"seed", mixture.provenance.seed},
                     {"sweeps", mixture.provenance.sweeps}};
  json patterns = json::array();
  for (const auto& p : mixture.patterns) {
    json samples = json::array();
    for (const auto& s : p.samples) samples.push_back({s.x, s.y, s.dx, s.dy});
    json e;
    e["label"] = p.label;
    e["members"] = p.members;
    e["goal"] = {p.goal.x(), p.goal.y()};
    e["lrt_reference"] = std::isfinite(p.lrt_reference) ? json(p.lrt_reference) : json(nullptr);
    e["hyper_dx"] = hyper_json(p.gp_dx.hyper());
    e["hyper_dy"] = hyper_json(p.gp_dy.hyper());
    e["samples"] = std::move(samples);
    patterns.push_back(std::move(e));
  }
  j["patterns"] = std::move(patterns);
  out << j.dump() << '\n';
}

MixtureModel read_mixture(std::istream& in, const std::string& source) {
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != kFormat) throw DataError(source + ": not a mixture model file");
    if (j.value("version", 0) != kVersion) throw DataError(source + ": unsupported model version");
    MixtureModel m;
    m.alpha = j.at("alpha").get<double>();
    m.priors = j.at("priors").get<std::vector<double>>();
    const auto& prov = j.at("provenance");
    m.provenance.corpus_hash = prov.at("corpus_hash").get<std::string>();
    m.provenance.seed = prov.at("seed").get<std::uint64_t>();
    m.provenance.sweeps = prov.at("sweeps").get<std::size_t>();
    for (const auto& e : j.at("patterns")) {
      MotionPattern p;
      p.label = e.at("label").get<std::string>();
      p.members = e.at("members").get<std::vector<std::string>>();
      p.goal = Vec2(e.at("goal").at(0).get<double>(), e.at("goal").at(1).get<double>());
      if (!e.at("lrt_reference").is_null()) p.lrt_reference = e.at("lrt_reference").get<double>();
      for (const auto& s : e.at("samples")) {
        p.samples.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>(), s.at(3).get<double>()});
      }
      if (p.samples.empty()) throw DataError(source + ": pattern '" + p.label + "' has no samples");
      p.refit(hyper_from(e.at("hyper_dx")), hyper_from(e.at("hyper_dy")));
      m.patterns.push_back(std::move(p));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": " + e.what());
  }
}

void save_mixture(const std::filesystem::path& path, const MixtureModel& mixture) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_mixture(out, mixture);
  if (!out) throw DataError("failed writing " + path.string());
}

MixtureModel load_mixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read model " + path.string());
  return read_mixture(in, path.string());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string corpus_hash(std::span<const Trajectory> trajectories) {
  std::ostringstream s;
  write_trajectories(s, trajectories);
  return fnv1a_hex(s.str());
}

}  // namespace flowpred
