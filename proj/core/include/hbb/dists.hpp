#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hbb/rng.hpp"

namespace hbb {

// Simplex tolerance used by every weight-vector check in the library.
inline constexpr double kSimplexTolerance = 1e-10;

// A discrete distribution: point masses on rows of some covariate matrix.
//
// `atom_ids` index rows of the matrix the distribution lives on (the observed
// confounder matrix for bootstrap draws, a synthetic matrix for oracle
// draws). Ids are unique and weights form a simplex.
class WeightedAtoms {
 public:
  WeightedAtoms() = default;

  // Validating constructor: equal lengths, unique ids, non-negative finite
  // weights summing to 1 within kSimplexTolerance. Throws ValidationError.
  WeightedAtoms(std::vector<std::size_t> atom_ids, std::vector<double> weights);

  // Skips validation. For samplers whose output is a simplex by construction.
  static WeightedAtoms trusted(std::vector<std::size_t> atom_ids,
                               std::vector<double> weights) noexcept;

  // Uniform weights 1/k on the given ids.
  static WeightedAtoms uniform(std::vector<std::size_t> atom_ids);
  // A single atom carrying all mass.
  static WeightedAtoms point_mass(std::size_t atom_id);

  std::size_t size() const noexcept { return atom_ids_.size(); }
  bool empty() const noexcept { return atom_ids_.empty(); }
  const std::vector<std::size_t>& atom_ids() const noexcept { return atom_ids_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  // Total mass on `atom_id` (0 if absent).
  double mass_of(std::size_t atom_id) const noexcept;

 private:
  std::vector<std::size_t> atom_ids_;
  std::vector<double> weights_;
};

// log of a Gamma(shape, 1) variate. Finite for every shape > 0, including
// shapes where the variate itself underflows double precision.
double sample_log_gamma(double shape, RngStream& rng);

// Gamma(shape, rate) variate. Shapes below one use the boost
// G(shape) = G(shape + 1) * U^(1/shape), evaluated in log space; results
// below the smallest subnormal are returned as denorm_min so the variate is
// always strictly positive. Throws DomainError unless shape > 0 and rate > 0.
double sample_gamma(double shape, double rate, RngStream& rng);

// Dirichlet draw. Zero entries in `concentration` give weight exactly 0,
// positive entries at least the smallest denormal.
// Normalization happens in log space, so tiny concentrations never lose the
// simplex. Throws DomainError on negative/non-finite entries and
// DegenerateInputError if no entry is positive.
std::vector<double> sample_dirichlet(std::span<const double> concentration,
                                     RngStream& rng);

// Categorical draw: index i with probability probs[i]. Throws DomainError on
// negative entries or a vector that does not sum to 1 within 1e-8.
std::size_t sample_multinomial_index(std::span<const double> probs, RngStream& rng);

double sample_normal(double mean, double sd, RngStream& rng);
bool sample_bernoulli(double p, RngStream& rng);

}  // namespace hbb
