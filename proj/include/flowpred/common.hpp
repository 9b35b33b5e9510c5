// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace flowpred {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Input data that cannot be used (malformed files, invariant violations).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Factorization failures that survive the jitter policy.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowpred
