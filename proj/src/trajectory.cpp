// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/trajectory.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

namespace flowpred {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

void Trajectory::validate() const {
  if (points.size() < 2) {
    throw DataError("trajectory '" + id + "' has " + std::to_string(points.size()) +
                    " point(s); at least 2 are required");
  }
  if (!labels.empty() && labels.size() != points.size()) {
    throw DataError("trajectory '" + id + "' has misaligned labels");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DataError("trajectory '" + id + "' point " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(p.t > points[i - 1].t)) {
      throw DataError("trajectory '" + id + "' timestamps not strictly increasing at point " +
                      std::to_string(i));
    }
  }
}

std::vector<Trajectory> parse_trajectories(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  ++line_no;
  const auto header = split_csv(trim(line));
  bool with_labels = false;
  if (header.size() == 5 && trim(header[4]) == "label") with_labels = true;
  const bool header_ok = (header.size() == 4 || with_labels) && trim(header[0]) == "id" &&
                         trim(header[1]) == "t" && trim(header[2]) == "x" && trim(header[3]) == "y";
  if (!header_ok) throw DataError(source + ":1: expected header 'id,t,x,y' (optionally ',label')");

  std::vector<Trajectory> out;
  std::unordered_map<std::string, std::size_t> index;
  const std::size_t columns = with_labels ? 5 : 4;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    const auto fields = split_csv(row);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != columns) {
      throw DataError(where + "expected " + std::to_string(columns) + " columns, got " +
                      std::to_string(fields.size()));
    }
    const std::string id = trim(fields[0]);
    if (id.empty()) throw DataError(where + "empty id");
    TrajectoryPoint p;
    if (!parse_double(fields[1], p.t) || !parse_double(fields[2], p.x) || !parse_double(fields[3], p.y)) {
      throw DataError(where + "malformed numeric field");
    }
    auto [it, inserted] = index.try_emplace(id, out.size());
    if (inserted) out.push_back(Trajectory{id, {}, {}});
    Trajectory& traj = out[it->second];
    if (!traj.points.empty()) {
      const double last = traj.points.back().t;
      if (p.t == last) throw DataError(where + "duplicate (id,t) pair for id '" + id + "'");
      if (p.t < last) throw DataError(where + "time decreases within id '" + id + "'");
    }
    traj.points.push_back(p);
    if (with_labels) traj.labels.push_back(trim(fields[4]));
  }
  for (const auto& traj : out) traj.validate();
  return out;
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file: " + path.string());
  return parse_trajectories(in, path.string());
}

void write_trajectories(std::ostream& out, std::span<const Trajectory> trajectories) {
  bool labeled = !trajectories.empty();
  for (const auto& t : trajectories) labeled = labeled && t.labeled();
  out << (labeled ? "id,t,x,y,label\n" : "id,t,x,y\n");
  out << std::fixed;
  for (const auto& traj : trajectories) {
    for (std::size_t i = 0; i < traj.points.size(); ++i) {
      const auto& p = traj.points[i];
      out << traj.id << ',' << std::setprecision(3) << p.t << ',' << std::setprecision(5) << p.x << ','
          << p.y;
      if (labeled) out << ',' << traj.labels[i];
      out << '\n';
    }
  }
}

void save_trajectories(const std::filesystem::path& path, std::span<const Trajectory> trajectories) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectory file: " + path.string());
  write_trajectories(out, trajectories);
}

std::vector<DerivativeSample> estimate_derivatives(const Trajectory& traj) { return estimate_derivatives(traj, 1); }

std::vector<DerivativeSample> estimate_derivatives(const Trajectory& traj, std::size_t lag) {
  if (lag < 1) throw ConfigError("derivative lag must be >= 1");
  std::vector<DerivativeSample> out;
  if (traj.points.size() <= lag) return out;
  out.reserve(traj.points.size() - lag);
  for (std::size_t k = 0; k + lag < traj.points.size(); ++k) {
    const auto& a = traj.points[k];
    const auto& b = traj.points[k + lag];
    const double dt = b.t - a.t;
    if (!(dt > 0.0)) throw DataError("trajectory '" + traj.id + "' has a zero time gap");
    out.push_back({a.x, a.y, (b.x - a.x) / dt, (b.y - a.y) / dt});
  }
  return out;
}

std::vector<DerivativeSample> thin_samples(std::span<const DerivativeSample> samples, std::size_t stride) {
  if (stride <= 1) return {samples.begin(), samples.end()};
  std::vector<DerivativeSample> out;
  out.reserve(samples.size() / stride + 1);
  for (std::size_t i = 0; i < samples.size(); i += stride) out.push_back(samples[i]);
  return out;
}

std::vector<DerivativeSample> cap_samples(std::span<const DerivativeSample> samples, std::size_t cap) {
  if (cap == 0 || samples.size() <= cap) return {samples.begin(), samples.end()};
  if (cap == 1) return {samples.front()};
  std::vector<DerivativeSample> out;
  out.reserve(cap);
  const double step = static_cast<double>(samples.size() - 1) / static_cast<double>(cap - 1);
  for (std::size_t i = 0; i < cap; ++i) {
    out.push_back(samples[static_cast<std::size_t>(std::lround(step * static_cast<double>(i)))]);
  }
  return out;
}

Window::Window(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

void Window::push(const DerivativeSample& s) {
  samples_.push_back(s);
  while (samples_.size() > capacity_) samples_.pop_front();
}

Vec2 Window::mean_velocity() const {
  Vec2 v = Vec2::Zero();
  if (samples_.empty()) return v;
  for (const auto& s : samples_) v += s.velocity();
  return v / static_cast<double>(samples_.size());
}

}  // namespace flowpred
