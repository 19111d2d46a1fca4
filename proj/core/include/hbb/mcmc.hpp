#pragma once

#include <cstddef>
#include <string_view>

#include <Eigen/Core>

#include "hbb/rng.hpp"

namespace hbb {

// Differentiable log density (up to a constant).
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual std::size_t dimension() const noexcept = 0;
  // Returns log p(x). Writes the gradient into `gradient` when non-null.
  virtual double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const = 0;
};

enum class McmcKernel {
  // Static-length HMC with a dense metric and dual-averaging step size, both
  // adapted during burn-in.
  kHamiltonian,
  // Random-walk Metropolis with diagonal preconditioning and a global scale
  // tuned toward 0.234 acceptance during burn-in.
  kRandomWalk,
};

std::string_view kernel_name(McmcKernel kernel) noexcept;
McmcKernel parse_kernel(std::string_view name);

struct McmcConfig {
  std::size_t n_draws = 2000;
  std::size_t n_burnin = 2000;
  McmcKernel kernel = McmcKernel::kHamiltonian;
  // Initial step size; 0 picks one automatically.
  double step_size = 0.0;
  // 0 uses the kernel default (0.8 for HMC, 0.234 for random walk).
  double target_acceptance = 0.0;
  // HMC integration time in whitened units.
  double trajectory_length = 1.5;

  void validate() const;
};

struct McmcDiagnostics {
  double acceptance_rate = 0.0;  // over retained iterations
  double step_size = 0.0;        // final (post-adaptation) step size
  std::size_t divergences = 0;   // over retained iterations
  std::size_t density_evaluations = 0;
};

struct McmcResult {
  Eigen::MatrixXd draws;  // n_draws x dimension, row m is draw m
  McmcDiagnostics diagnostics;
};

// Runs one chain from `initial`. Throws InitializationError if the log
// density is not finite at `initial`.
McmcResult sample_posterior(const LogDensity& target, const Eigen::VectorXd& initial,
                            const McmcConfig& config, RngStream& rng);

}  // namespace hbb
