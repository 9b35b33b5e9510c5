// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "flowpred/common.hpp"

namespace flowpred {

struct TrajectoryPoint {
  double t = 0.0;  // seconds
  double x = 0.0;  // meters
  double y = 0.0;
};

/// Timestamped positions of one agent. Optional per-point behavior labels are
/// carried through from labeled corpora (ground truth for evaluation).
struct Trajectory {
  std::string id;
  std::vector<TrajectoryPoint> points;
  std::vector<std::string> labels;  // empty, or one entry per point

  std::size_t size() const { return points.size(); }
  bool labeled() const { return !labels.empty(); }
  Vec2 position(std::size_t i) const { return {points[i].x, points[i].y}; }

  // Throws DataError when timestamps are not strictly increasing, a value is
  // non-finite, there are fewer than two points, or labels are misaligned.
  void validate() const;
};

/// Velocity observed at a location: (x, y) -> (dx/dt, dy/dt).
struct DerivativeSample {
  double x = 0.0;
  double y = 0.0;
  double dx = 0.0;
  double dy = 0.0;

  Vec2 location() const { return {x, y}; }
  Vec2 velocity() const { return {dx, dy}; }
};

/// Reads an `id,t,x,y[,label]` CSV. Rows are grouped by id in order of first
/// appearance; within an id, timestamps must strictly increase in file order.
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);
std::vector<Trajectory> parse_trajectories(std::istream& in, const std::string& source = "<stream>");
void write_trajectories(std::ostream& out, std::span<const Trajectory> trajectories);
void save_trajectories(const std::filesystem::path& path, std::span<const Trajectory> trajectories);

/// Forward differences: sample k pairs point k with (p[k+1]-p[k])/(t[k+1]-t[k]).
std::vector<DerivativeSample> estimate_derivatives(const Trajectory& traj);

/// Sliding differences over `lag` observations: sample k pairs point k with
/// (p[k+lag]-p[k])/(t[k+lag]-t[k]). lag 1 equals estimate_derivatives.
std::vector<DerivativeSample> estimate_derivatives(const Trajectory& traj, std::size_t lag);

/// Every `stride`-th sample starting at index 0.
std::vector<DerivativeSample> thin_samples(std::span<const DerivativeSample> samples, std::size_t stride);

/// Evenly spaced subset of at most `cap` samples (first and last kept).
std::vector<DerivativeSample> cap_samples(std::span<const DerivativeSample> samples, std::size_t cap);

/// Fixed-capacity FIFO of the most recent derivative samples.
class Window {
 public:
  explicit Window(std::size_t capacity = 15);

  void push(const DerivativeSample& s);
  void clear() { samples_.clear(); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  bool full() const { return samples_.size() == capacity_; }
  const DerivativeSample& back() const { return samples_.back(); }

  // Oldest first.
  std::vector<DerivativeSample> contents() const { return {samples_.begin(), samples_.end()}; }
  Vec2 mean_velocity() const;

 private:
  std::size_t capacity_;
  std::deque<DerivativeSample> samples_;
};

}  // namespace flowpred
