#include "hbb/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hbb/errors.hpp"

namespace hbb {

WeightedAtoms::WeightedAtoms(std::vector<std::size_t> atom_ids,
                             std::vector<double> weights)
    : atom_ids_(std::move(atom_ids)), weights_(std::move(weights)) {
  if (atom_ids_.size() != weights_.size()) {
    throw ValidationError("WeightedAtoms: " + std::to_string(atom_ids_.size()) +
                          " atom ids but " + std::to_string(weights_.size()) +
                          " weights");
  }
  if (atom_ids_.empty()) throw ValidationError("WeightedAtoms: no atoms");
  double total = 0.0;
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("WeightedAtoms: weights must be finite and non-negative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw ValidationError("WeightedAtoms: weights sum to " + std::to_string(total));
  }
  std::vector<std::size_t> sorted = atom_ids_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("WeightedAtoms: duplicate atom id");
  }
}

WeightedAtoms WeightedAtoms::trusted(std::vector<std::size_t> atom_ids,
                                     std::vector<double> weights) noexcept {
  WeightedAtoms out;
  out.atom_ids_ = std::move(atom_ids);
  out.weights_ = std::move(weights);
  return out;
}

WeightedAtoms WeightedAtoms::uniform(std::vector<std::size_t> atom_ids) {
  if (atom_ids.empty()) throw ValidationError("WeightedAtoms::uniform: no atoms");
  const double w = 1.0 / static_cast<double>(atom_ids.size());
  std::vector<double> weights(atom_ids.size(), w);
  return WeightedAtoms(std::move(atom_ids), std::move(weights));
}

WeightedAtoms WeightedAtoms::point_mass(std::size_t atom_id) {
  return trusted({atom_id}, {1.0});
}

double WeightedAtoms::mass_of(std::size_t atom_id) const noexcept {
  double total = 0.0;
  for (std::size_t k = 0; k < atom_ids_.size(); ++k) {
    if (atom_ids_[k] == atom_id) total += weights_[k];
  }
  return total;
}

namespace {

// Marsaglia & Tsang (2000) squeeze/rejection, returning log of the variate.
double log_gamma_large(double shape, RngStream& rng) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  const double log_d = std::log(d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return log_d + std::log(v);
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return log_d + std::log(v);
    }
  }
}

}  // namespace

double sample_log_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) {
    throw DomainError("gamma: shape must be positive and finite, got " +
                      std::to_string(shape));
  }
  if (shape >= 1.0) return log_gamma_large(shape, rng);
  const double log_boosted = log_gamma_large(shape + 1.0, rng);
  return log_boosted + std::log(rng.uniform_open()) / shape;
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(rate > 0.0) || !std::isfinite(rate)) {
    throw DomainError("gamma: rate must be positive and finite, got " +
                      std::to_string(rate));
  }
  const double value = std::exp(sample_log_gamma(shape, rng) - std::log(rate));
  if (value == 0.0) return std::numeric_limits<double>::denorm_min();
  return value;
}

std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RngStream& rng) {
  bool any_positive = false;
  for (double c : concentration) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw DomainError("dirichlet: concentrations must be finite and non-negative");
    }
    any_positive = any_positive || c > 0.0;
  }
  if (!any_positive) {
    throw DegenerateInputError("dirichlet: concentration vector has no positive entry");
  }

  const std::size_t k = concentration.size();
  std::vector<double> out(k, 0.0);
  constexpr int kAttempts = 3;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      if (concentration[i] > 0.0) {
        out[i] = sample_log_gamma(concentration[i], rng);
        max_log = std::max(max_log, out[i]);
      }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (concentration[i] > 0.0) {
        out[i] = std::exp(out[i] - max_log);
        total += out[i];
      } else {
        out[i] = 0.0;
      }
    }
    if (total > 0.0 && std::isfinite(total)) {
      // Weights of positive-concentration atoms below the double range stay at
      // the smallest denormal rather than 0.
      constexpr double kTiny = std::numeric_limits<double>::denorm_min();
      for (std::size_t i = 0; i < k; ++i) {
        out[i] /= total;
        if (concentration[i] > 0.0 && out[i] < kTiny) out[i] = kTiny;
      }
      return out;
    }
  }
  throw NumericalError("dirichlet: normalization failed after 3 attempts");
}

std::size_t sample_multinomial_index(std::span<const double> probs, RngStream& rng) {
  if (probs.empty()) throw DomainError("multinomial: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DomainError("multinomial: probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-8) {
    throw DomainError("multinomial: probabilities sum to " + std::to_string(total));
  }
  const double u = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] == 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

double sample_normal(double mean, double sd, RngStream& rng) {
  if (!(sd >= 0.0)) throw DomainError("normal: sd must be non-negative");
  return mean + sd * rng.normal();
}

bool sample_bernoulli(double p, RngStream& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bernoulli: p must lie in [0, 1]");
  return rng.uniform() < p;
}

}  // namespace hbb
