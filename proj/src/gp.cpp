// Apache License, Version 2.0, refer to LICENSE.txt

#include "flowpred/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace flowpred {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

struct Evidence {
  double value = -std::numeric_limits<double>::infinity();
  Eigen::Vector4d gradient = Eigen::Vector4d::Zero();
};

Evidence evaluate_evidence(const GpModel::Inputs& x, const Eigen::VectorXd& y, const Hyperparameters& h,
                           bool with_gradient) {
  Evidence ev;
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd kse = gram(x, x, h);
  Eigen::MatrixXd k = kse;
  k.diagonal().array() += h.noise_variance;
  Eigen::LLT<Eigen::MatrixXd> llt;
  try {
    factorize_with_jitter(k, h.signal_variance, llt);
  } catch (const NumericalError&) {
    return ev;
  }
  const Eigen::VectorXd alpha = llt.solve(y);
  const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
  ev.value = -0.5 * y.dot(alpha) - log_det_half - 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!with_gradient) return ev;

  const Eigen::MatrixXd w = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd a = alpha * alpha.transpose() - w;
  const double inv_lx2 = 1.0 / (h.length_scale_x * h.length_scale_x);
  const double inv_ly2 = 1.0 / (h.length_scale_y * h.length_scale_y);
  double g_lx = 0.0, g_ly = 0.0, g_sf = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ak = a(i, j) * kse(i, j);
      const double ddx = x(i, 0) - x(j, 0);
      const double ddy = x(i, 1) - x(j, 1);
      g_lx += ak * ddx * ddx;
      g_ly += ak * ddy * ddy;
      g_sf += ak;
    }
  }
  ev.gradient << 0.5 * g_lx * inv_lx2, 0.5 * g_ly * inv_ly2, 0.5 * g_sf, 0.5 * h.noise_variance * a.trace();
  return ev;
}

}  // namespace

void Hyperparameters::validate() const {
  const bool finite = std::isfinite(length_scale_x) && std::isfinite(length_scale_y) &&
                      std::isfinite(signal_variance) && std::isfinite(noise_variance);
  if (!finite || length_scale_x <= 0 || length_scale_y <= 0 || signal_variance <= 0 || noise_variance < 0) {
    throw ConfigError("invalid GP hyperparameters");
  }
}

Eigen::Vector4d Hyperparameters::to_log() const {
  return {std::log(length_scale_x), std::log(length_scale_y), std::log(signal_variance),
          std::log(std::max(noise_variance, 1e-300))};
}

Hyperparameters Hyperparameters::from_log(const Eigen::Vector4d& theta) {
  return {std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2]), std::exp(theta[3])};
}

Eigen::Vector4d HyperBounds::lower_log() const {
  return {std::log(length_min), std::log(length_min), std::log(signal_min), std::log(noise_min)};
}

Eigen::Vector4d HyperBounds::upper_log() const {
  return {std::log(length_max), std::log(length_max), std::log(signal_max), std::log(noise_max)};
}

double kernel_eval(const Vec2& p, const Vec2& q, const Hyperparameters& h) {
  const double dx = p.x() - q.x();
  const double dy = p.y() - q.y();
  return h.signal_variance * std::exp(-dx * dx / (2.0 * h.length_scale_x * h.length_scale_x) -
                                      dy * dy / (2.0 * h.length_scale_y * h.length_scale_y));
}

Eigen::MatrixXd gram(const GpModel::Inputs& a, const GpModel::Inputs& b, const Hyperparameters& h) {
  const double cx = -0.5 / (h.length_scale_x * h.length_scale_x);
  const double cy = -0.5 / (h.length_scale_y * h.length_scale_y);
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double dx = a(i, 0) - b(j, 0);
      const double dy = a(i, 1) - b(j, 1);
      k(i, j) = h.signal_variance * std::exp(cx * dx * dx + cy * dy * dy);
    }
  }
  return k;
}

double factorize_with_jitter(Eigen::MatrixXd matrix, double scale, Eigen::LLT<Eigen::MatrixXd>& llt) {
  llt.compute(matrix);
  if (llt.info() == Eigen::Success) return 0.0;
  double jitter = 1e-8 * scale;
  for (int retry = 0; retry < 10; ++retry) {
    Eigen::MatrixXd m = matrix;
    m.diagonal().array() += jitter;
    llt.compute(m);
    if (llt.info() == Eigen::Success) return jitter;
    jitter *= 10.0;
  }
  throw NumericalError("Cholesky factorization failed after jitter retries");
}

GpModel::GpModel(const Hyperparameters& hyper) : inputs_(0, 2), targets_(0), hyper_(hyper) {
  hyper_.validate();
}

GpModel::GpModel(Inputs inputs, Eigen::VectorXd targets, const Hyperparameters& hyper)
    : inputs_(std::move(inputs)), targets_(std::move(targets)), hyper_(hyper) {
  hyper_.validate();
  if (inputs_.rows() != targets_.size()) throw DataError("GP inputs/targets size mismatch");
  if (inputs_.rows() == 0) return;
  Eigen::MatrixXd k = gram(inputs_, inputs_, hyper_);
  k.diagonal().array() += hyper_.noise_variance;
  jitter_ = factorize_with_jitter(std::move(k), hyper_.signal_variance, llt_);
  alpha_ = llt_.solve(targets_);
}

Eigen::VectorXd GpModel::cross_kernel(const Vec2& q) const {
  const double cx = -0.5 / (hyper_.length_scale_x * hyper_.length_scale_x);
  const double cy = -0.5 / (hyper_.length_scale_y * hyper_.length_scale_y);
  Eigen::VectorXd k(inputs_.rows());
  for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
    const double dx = inputs_(i, 0) - q.x();
    const double dy = inputs_(i, 1) - q.y();
    k[i] = hyper_.signal_variance * std::exp(cx * dx * dx + cy * dy * dy);
  }
  return k;
}

PosteriorPoint GpModel::predict(const Vec2& q) const {
  if (size() == 0) return {0.0, hyper_.signal_variance + hyper_.noise_variance};
  const Eigen::VectorXd k = cross_kernel(q);
  const double mean = k.dot(alpha_);
  const Eigen::VectorXd v = llt_.matrixL().solve(k);
  const double latent = std::max(0.0, hyper_.signal_variance - v.squaredNorm());
  return {mean, latent + hyper_.noise_variance};
}

double GpModel::predict_mean(const Vec2& q) const {
  if (size() == 0) return 0.0;
  return cross_kernel(q).dot(alpha_);
}

Vec2 GpModel::mean_gradient(const Vec2& q) const {
  const double hx = 1e-4 * hyper_.length_scale_x;
  const double hy = 1e-4 * hyper_.length_scale_y;
  const double gx = (predict_mean(q + Vec2(hx, 0.0)) - predict_mean(q - Vec2(hx, 0.0))) / (2.0 * hx);
  const double gy = (predict_mean(q + Vec2(0.0, hy)) - predict_mean(q - Vec2(0.0, hy))) / (2.0 * hy);
  return {gx, gy};
}

double GpModel::log_predictive_density(const Vec2& q, double target) const {
  const PosteriorPoint p = predict(q);
  const double r = target - p.mean;
  return -0.5 * r * r / p.variance - 0.5 * std::log(p.variance) - 0.5 * kLog2Pi;
}

double GpModel::log_joint_likelihood(const Inputs& locations, const Eigen::VectorXd& targets) const {
  const Eigen::Index n = locations.rows();
  if (n == 0 || targets.size() != n) throw DataError("log_joint_likelihood needs matching, non-empty inputs");
  Eigen::MatrixXd sigma = gram(locations, locations, hyper_);
  sigma.diagonal().array() += hyper_.noise_variance;
  Eigen::VectorXd residual = targets;
  if (size() > 0) {
    const Eigen::MatrixXd kxs = gram(inputs_, locations, hyper_);
    residual -= kxs.transpose() * alpha_;
    const Eigen::MatrixXd v = llt_.matrixL().solve(kxs);
    sigma.noalias() -= v.transpose() * v;
  }
  Eigen::LLT<Eigen::MatrixXd> llt;
  factorize_with_jitter(std::move(sigma), hyper_.signal_variance + hyper_.noise_variance, llt);
  const Eigen::VectorXd z = llt.matrixL().solve(residual);
  const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * z.squaredNorm() - log_det_half - 0.5 * static_cast<double>(n) * kLog2Pi;
}

std::pair<double, Eigen::Vector4d> GpModel::log_marginal_likelihood() const {
  if (size() == 0) return {0.0, Eigen::Vector4d::Zero()};
  const Evidence ev = evaluate_evidence(inputs_, targets_, hyper_, true);
  return {ev.value, ev.gradient};
}

double GpModel::log_evidence() const {
  if (size() == 0) return 0.0;
  const double log_det_half = llt_.matrixLLT().diagonal().array().log().sum();
  return -0.5 * targets_.dot(alpha_) - log_det_half - 0.5 * static_cast<double>(size()) * kLog2Pi;
}

GpModel::Inputs sample_locations(std::span<const DerivativeSample> samples) {
  GpModel::Inputs x(static_cast<Eigen::Index>(samples.size()), 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    x(static_cast<Eigen::Index>(i), 0) = samples[i].x;
    x(static_cast<Eigen::Index>(i), 1) = samples[i].y;
  }
  return x;
}

Eigen::VectorXd sample_targets(std::span<const DerivativeSample> samples, Channel channel) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = channel == Channel::dx ? samples[i].dx : samples[i].dy;
  }
  return y;
}

GpModel gp_fit(std::span<const DerivativeSample> samples, Channel channel, const Hyperparameters& hyper) {
  if (samples.empty()) throw DataError("gp_fit requires at least one sample");
  return GpModel(sample_locations(samples), sample_targets(samples, channel), hyper);
}

OptimizerResult optimize_hyperparameters_detailed(const GpModel::Inputs& inputs, const Eigen::VectorXd& targets,
                                                  const Hyperparameters& init, const OptimizerOptions& options) {
  init.validate();
  const Eigen::Vector4d lo = options.bounds.lower_log();
  const Eigen::Vector4d hi = options.bounds.upper_log();
  auto clamp = [&](Eigen::Vector4d t) {
    for (int i = 0; i < 4; ++i) t[i] = std::clamp(t[i], lo[i], hi[i]);
    return t;
  };
  auto projected = [&](const Eigen::Vector4d& theta, Eigen::Vector4d g) {
    for (int i = 0; i < 4; ++i) {
      if ((theta[i] <= lo[i] && g[i] < 0.0) || (theta[i] >= hi[i] && g[i] > 0.0)) g[i] = 0.0;
    }
    return g;
  };

  Eigen::Vector4d theta = clamp(init.to_log());
  Evidence current = evaluate_evidence(inputs, targets, Hyperparameters::from_log(theta), true);
  OptimizerResult result{Hyperparameters::from_log(theta), current.value, current.value, 0};
  if (!std::isfinite(current.value)) return result;

  double step = -1.0;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const Eigen::Vector4d g = projected(theta, current.gradient);
    const double gnorm = g.cwiseAbs().maxCoeff();
    if (gnorm < options.gradient_tolerance) break;
    if (step <= 0.0) step = 0.5 / std::max(1.0, gnorm);

    bool accepted = false;
    Eigen::Vector4d candidate;
    Evidence trial;
    for (std::size_t h = 0; h < options.max_halvings; ++h) {
      candidate = clamp(theta + step * g);
      trial = evaluate_evidence(inputs, targets, Hyperparameters::from_log(candidate), false);
      if (trial.value > current.value) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double gain = trial.value - current.value;
    theta = candidate;
    current = evaluate_evidence(inputs, targets, Hyperparameters::from_log(theta), true);
    result.iterations = it + 1;
    step *= 2.0;
    if (gain < options.min_improvement) break;
  }
  result.hyper = Hyperparameters::from_log(theta);
  result.evidence = current.value;
  return result;
}

Hyperparameters optimize_hyperparameters(std::span<const DerivativeSample> samples, Channel channel,
                                         const Hyperparameters& init, const OptimizerOptions& options) {
  if (samples.size() < 2) throw DataError("hyperparameter optimization requires at least 2 samples");
  return optimize_hyperparameters_detailed(sample_locations(samples), sample_targets(samples, channel), init,
                                           options)
      .hyper;
}

}  // namespace flowpred
