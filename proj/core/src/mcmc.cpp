#include "hbb/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

#include "hbb/errors.hpp"

namespace hbb {

std::string_view kernel_name(McmcKernel kernel) noexcept {
  return kernel == McmcKernel::kHamiltonian ? "hmc" : "rwm";
}

McmcKernel parse_kernel(std::string_view name) {
  if (name == "hmc") return McmcKernel::kHamiltonian;
  if (name == "rwm") return McmcKernel::kRandomWalk;
  throw ValidationError("unknown MCMC kernel '" + std::string(name) + "' (expected hmc or rwm)");
}

void McmcConfig::validate() const {
  if (n_draws < 1) throw ValidationError("MCMC: n_draws must be at least 1");
  if (step_size < 0.0 || !std::isfinite(step_size)) {
    throw ValidationError("MCMC: step_size must be non-negative (0 = auto)");
  }
  if (target_acceptance < 0.0 || target_acceptance >= 1.0) {
    throw ValidationError("MCMC: target_acceptance must lie in [0, 1)");
  }
  if (!(trajectory_length > 0.0)) throw ValidationError("MCMC: trajectory_length must be positive");
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Hoffman & Gelman (2014) dual averaging of log step size.
class DualAveraging {
 public:
  DualAveraging(double step, double target) : target_(target) { restart(step); }

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    h_bar_ = 0.0;
    log_step_bar_ = 0.0;
    count_ = 0;
    log_step_ = std::log(step);
  }

  double update(double accept_prob) {
    ++count_;
    const double t = static_cast<double>(count_);
    const double w = 1.0 / (t + kT0);
    h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_prob);
    log_step_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double eta = std::pow(t, -kKappa);
    log_step_bar_ = eta * log_step_ + (1.0 - eta) * log_step_bar_;
    return std::exp(log_step_);
  }

  double final_step() const { return count_ == 0 ? std::exp(log_step_) : std::exp(log_step_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double target_;
  double mu_ = 0.0, h_bar_ = 0.0, log_step_bar_ = 0.0, log_step_ = 0.0;
  long count_ = 0;
};

// Welford accumulator for the warm-up covariance estimate.
class CovarianceEstimator {
 public:
  explicit CovarianceEstimator(Eigen::Index dim) : mean_(VectorXd::Zero(dim)), m2_(MatrixXd::Zero(dim, dim)) {}
  void add(const VectorXd& x) {
    ++count_;
    const VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_.noalias() += delta * (x - mean_).transpose();
  }
  std::size_t count() const { return count_; }
  // Sample covariance shrunk toward 1e-3 * I (the Stan warm-up regularizer).
  MatrixXd regularized() const {
    const double n = static_cast<double>(count_);
    MatrixXd cov = m2_ / std::max(n - 1.0, 1.0);
    cov *= n / (n + 5.0);
    cov.diagonal().array() += 1e-3 * 5.0 / (n + 5.0);
    return cov;
  }
  VectorXd variances() const {
    const double n = static_cast<double>(count_);
    return m2_.diagonal() / std::max(n - 1.0, 1.0);
  }
  void reset() {
    count_ = 0;
    mean_.setZero();
    m2_.setZero();
  }

 private:
  std::size_t count_ = 0;
  VectorXd mean_;
  MatrixXd m2_;
};

class HamiltonianSampler {
 public:
  HamiltonianSampler(const LogDensity& target, const VectorXd& initial, const McmcConfig& config,
                     RngStream& rng)
      : target_(target),
        config_(config),
        rng_(rng),
        dim_(static_cast<Eigen::Index>(target.dimension())),
        chol_(MatrixXd::Identity(dim_, dim_)),
        theta_(initial),
        grad_theta_(dim_) {
    log_p_ = evaluate(theta_, grad_theta_);
    if (!std::isfinite(log_p_) || !grad_theta_.allFinite()) {
      throw InitializationError("log posterior is not finite at the initial state");
    }
    z_ = theta_;
  }

  McmcResult run() {
    const double target_accept = config_.target_acceptance > 0.0 ? config_.target_acceptance : 0.8;
    step_ = config_.step_size > 0.0 ? config_.step_size : find_reasonable_step(1.0);
    DualAveraging adapt(step_, target_accept);

    const std::size_t burnin = config_.n_burnin;
    std::size_t window_begin = burnin, window_mid = burnin, window_end = burnin;
    if (burnin >= 100) {
      window_begin = static_cast<std::size_t>(0.15 * static_cast<double>(burnin));
      window_end = burnin - static_cast<std::size_t>(0.1 * static_cast<double>(burnin));
      window_mid = window_begin + (window_end - window_begin) / 3;
    }
    CovarianceEstimator cov(dim_);

    for (std::size_t it = 0; it < burnin; ++it) {
      const double accept_prob = transition(step_);
      step_ = adapt.update(accept_prob);
      if (it >= window_begin && it < window_end) cov.add(theta_);
      if (it + 1 == window_mid || it + 1 == window_end) {
        set_metric(cov.regularized());
        cov.reset();
        step_ = find_reasonable_step(step_);
        adapt.restart(step_);
      }
    }
    if (burnin > 0) step_ = adapt.final_step();

    McmcResult result;
    result.draws.resize(static_cast<Eigen::Index>(config_.n_draws), dim_);
    double accept_sum = 0.0;
    divergences_ = 0;
    for (std::size_t m = 0; m < config_.n_draws; ++m) {
      const double jitter = 0.9 + 0.2 * rng_.uniform();
      accept_sum += transition(step_ * jitter);
      result.draws.row(static_cast<Eigen::Index>(m)) = theta_.transpose();
    }
    result.diagnostics.acceptance_rate = accept_sum / static_cast<double>(config_.n_draws);
    result.diagnostics.step_size = step_;
    result.diagnostics.divergences = divergences_;
    result.diagnostics.density_evaluations = evaluations_;
    return result;
  }

 private:
  double evaluate(const VectorXd& theta, VectorXd& grad) {
    ++evaluations_;
    return target_.evaluate(theta, &grad);
  }

  VectorXd to_theta(const VectorXd& z) const { return chol_.triangularView<Eigen::Lower>() * z; }
  VectorXd grad_z(const VectorXd& grad_theta) const {
    return chol_.triangularView<Eigen::Lower>().transpose() * grad_theta;
  }

  void set_metric(const MatrixXd& covariance) {
    Eigen::LLT<MatrixXd> llt(covariance);
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
    } else {
      chol_ = covariance.diagonal().cwiseMax(1e-8).cwiseSqrt().asDiagonal();
    }
    z_ = chol_.triangularView<Eigen::Lower>().solve(theta_);
  }

  // One leapfrog trajectory of ceil(T / step) steps; returns the acceptance
  // probability and updates the state on acceptance.
  double transition(double step) {
    const double length = config_.trajectory_length;
    const auto steps = static_cast<int>(std::clamp(std::ceil(length / step), 1.0, 1024.0));
    VectorXd r(dim_);
    for (Eigen::Index j = 0; j < dim_; ++j) r[j] = rng_.normal();

    const double h0 = -log_p_ + 0.5 * r.squaredNorm();
    VectorXd z = z_;
    VectorXd theta = theta_;
    VectorXd grad = grad_theta_;
    double log_p = log_p_;
    r += 0.5 * step * grad_z(grad);
    for (int s = 0; s < steps; ++s) {
      z += step * r;
      theta = to_theta(z);
      log_p = evaluate(theta, grad);
      if (!std::isfinite(log_p) || !grad.allFinite()) break;
      r += (s + 1 == steps ? 0.5 : 1.0) * step * grad_z(grad);
    }
    const double h1 = -log_p + 0.5 * r.squaredNorm();
    const double delta = h0 - h1;
    if (!std::isfinite(delta) || delta < -1000.0) {
      ++divergences_;
      return 0.0;
    }
    const double accept_prob = delta >= 0.0 ? 1.0 : std::exp(delta);
    if (rng_.uniform() < accept_prob) {
      z_ = std::move(z);
      theta_ = std::move(theta);
      grad_theta_ = std::move(grad);
      log_p_ = log_p;
    }
    return accept_prob;
  }

  // Doubles or halves the step until a single leapfrog step crosses 0.5
  // acceptance.
  double find_reasonable_step(double step) {
    auto single_step_accept = [&](double eps) {
      VectorXd r(dim_);
      for (Eigen::Index j = 0; j < dim_; ++j) r[j] = rng_.normal();
      const double h0 = -log_p_ + 0.5 * r.squaredNorm();
      VectorXd grad = grad_theta_;
      r += 0.5 * eps * grad_z(grad);
      const VectorXd z = z_ + eps * r;
      const double log_p = evaluate(to_theta(z), grad);
      if (!std::isfinite(log_p) || !grad.allFinite()) return 0.0;
      r += 0.5 * eps * grad_z(grad);
      const double delta = h0 - (-log_p + 0.5 * r.squaredNorm());
      return std::isfinite(delta) ? std::exp(std::min(delta, 0.0)) : 0.0;
    };
    const bool grow = single_step_accept(step) > 0.5;
    for (int k = 0; k < 50; ++k) {
      const double next = grow ? step * 2.0 : step * 0.5;
      const double a = single_step_accept(next);
      if (grow ? a < 0.5 : a > 0.5) return grow ? step : next;
      step = next;
      if (step < 1e-8 || step > 1e4) break;
    }
    return std::clamp(step, 1e-8, 1e4);
  }

  const LogDensity& target_;
  const McmcConfig& config_;
  RngStream& rng_;
  Eigen::Index dim_;
  MatrixXd chol_;
  VectorXd theta_, z_, grad_theta_;
  double log_p_ = 0.0;
  double step_ = 0.1;
  std::size_t divergences_ = 0;
  std::size_t evaluations_ = 0;
};

McmcResult run_random_walk(const LogDensity& target, const VectorXd& initial,
                           const McmcConfig& config, RngStream& rng) {
  const auto dim = static_cast<Eigen::Index>(target.dimension());
  const double target_accept = config.target_acceptance > 0.0 ? config.target_acceptance : 0.234;
  std::size_t evaluations = 0;
  auto log_density = [&](const VectorXd& x) {
    ++evaluations;
    return target.evaluate(x, nullptr);
  };

  VectorXd theta = initial;
  double log_p = log_density(theta);
  if (!std::isfinite(log_p)) {
    throw InitializationError("log posterior is not finite at the initial state");
  }
  VectorXd scales = VectorXd::Constant(dim, config.step_size > 0.0 ? config.step_size : 0.1);
  double log_global = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
  CovarianceEstimator cov(dim);

  auto propose = [&](double global) {
    VectorXd proposal = theta;
    for (Eigen::Index j = 0; j < dim; ++j) proposal[j] += global * scales[j] * rng.normal();
    const double log_p_new = log_density(proposal);
    const double delta = log_p_new - log_p;
    const double accept_prob =
        std::isfinite(delta) ? (delta >= 0.0 ? 1.0 : std::exp(delta)) : 0.0;
    if (rng.uniform() < accept_prob) {
      theta = std::move(proposal);
      log_p = log_p_new;
    }
    return accept_prob;
  };

  const std::size_t burnin = config.n_burnin;
  const std::size_t refresh = std::max<std::size_t>(burnin / 10, 50);
  for (std::size_t it = 0; it < burnin; ++it) {
    const double a = propose(std::exp(log_global));
    log_global += (a - target_accept) / std::pow(static_cast<double>(it + 1), 0.6);
    cov.add(theta);
    if ((it + 1) % refresh == 0 && cov.count() > 20) {
      scales = cov.variances().cwiseMax(1e-12).cwiseSqrt();
      cov.reset();
      log_global = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
    }
  }

  McmcResult result;
  result.draws.resize(static_cast<Eigen::Index>(config.n_draws), dim);
  double accept_sum = 0.0;
  const double global = std::exp(log_global);
  for (std::size_t m = 0; m < config.n_draws; ++m) {
    accept_sum += propose(global);
    result.draws.row(static_cast<Eigen::Index>(m)) = theta.transpose();
  }
  result.diagnostics.acceptance_rate = accept_sum / static_cast<double>(config.n_draws);
  result.diagnostics.step_size = global;
  result.diagnostics.density_evaluations = evaluations;
  return result;
}

}  // namespace

McmcResult sample_posterior(const LogDensity& target, const VectorXd& initial,
                            const McmcConfig& config, RngStream& rng) {
  config.validate();
  if (static_cast<std::size_t>(initial.size()) != target.dimension()) {
    throw ValidationError("MCMC: initial state has wrong dimension");
  }
  if (config.kernel == McmcKernel::kRandomWalk) {
    return run_random_walk(target, initial, config, rng);
  }
  return HamiltonianSampler(target, initial, config, rng).run();
}

}  // namespace hbb
