#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hbb/dists.hpp"
#include "hbb/rng.hpp"

namespace hbb {

// Partition of subjects 0..n-1 into strata 0..K-1. Empty strata are allowed.
class StrataIndex {
 public:
  StrataIndex() = default;
  // `assignments[i]` is subject i's stratum; every entry must be < num_strata.
  StrataIndex(std::vector<std::size_t> assignments, std::size_t num_strata);

  std::size_t num_subjects() const noexcept { return assignments_.size(); }
  std::size_t num_strata() const noexcept { return members_.size(); }
  std::size_t assignment(std::size_t subject) const { return assignments_.at(subject); }
  const std::vector<std::size_t>& assignments() const noexcept { return assignments_; }
  // Sorted subject indices in stratum v.
  const std::vector<std::size_t>& members(std::size_t v) const;
  std::size_t size(std::size_t v) const { return members(v).size(); }

 private:
  std::vector<std::size_t> assignments_;
  std::vector<std::vector<std::size_t>> members_;
};

// Hyperparameters of the hierarchical Bayesian bootstrap.
struct HbbConfig {
  // Minimum desired effective stratum size M; alpha_v = n * M / n_v.
  double m_min = 100.0;
  // Either one shared alpha or one alpha per stratum; replaces the n*M/n_v
  // rule when present.
  std::optional<std::vector<double>> alpha_override;
  // Concentration of the top-level DP. Zero is what makes the hierarchical
  // Bayesian bootstrap; not configurable.
  static constexpr double top_level_gamma = 0.0;

  // Throws DomainError on m_min <= 0 or a negative override.
  void validate() const;
  // alpha for stratum v, honoring the override.
  double alpha(const StrataIndex& strata, std::size_t v) const;
};

// Uniform 1/n_v weights on S_v. Throws EmptyStratumError when n_v = 0.
WeightedAtoms empirical_weights(const StrataIndex& strata, std::size_t v);

// Stratum-specific Bayesian bootstrap: Dir(1_{n_v}) weights on S_v.
WeightedAtoms bb_draw(const StrataIndex& strata, std::size_t v, RngStream& rng);

// P_0 ~ Dir(1_n) over all n subjects (atoms 0..n-1 in order).
WeightedAtoms hbb_p0_draw(std::size_t n, RngStream& rng);

// Concentration vector of the conditional stratum draw:
// eta_i = alpha * pi_i + 1{i in S_v}, summing to alpha + n_v.
std::vector<double> hbb_concentration(const WeightedAtoms& p0, const StrataIndex& strata,
                                      std::size_t v, double alpha);

// P_v | P_0 ~ Dir(eta) over all n atoms. alpha = 0 is the unpooled limit
// (mass only on S_v). Throws DomainError for alpha < 0 or a p0 that does not
// cover atoms 0..n-1, DegenerateInputError for alpha = 0 with n_v = 0.
WeightedAtoms hbb_stratum_draw(const WeightedAtoms& p0, const StrataIndex& strata,
                               std::size_t v, double alpha, RngStream& rng);

// n * m_min / n_v. Throws EmptyStratumError for n_v = 0.
double alpha_for(std::size_t n, std::size_t n_v, double m_min);

// Expected in-stratum to out-of-stratum mass ratio, n / alpha + 1.
// Returns +infinity for alpha = 0.
double relative_mass_rho(double n, double alpha);

enum class Method { kEmpirical, kBayesianBootstrap, kHierarchical, kOracle };

inline constexpr Method kAllMethods[] = {Method::kEmpirical, Method::kBayesianBootstrap,
                                         Method::kHierarchical, Method::kOracle};

std::string_view method_name(Method method) noexcept;
// Accepts "empirical", "bb", "hbb", "oracle". Throws ValidationError.
Method parse_method(std::string_view name);

// Per-iteration source of stratum confounder distributions.
//
// Call begin_draw() once per posterior iteration, then stratum(v) for the
// strata needed. For the HBB the shared P_0 is drawn in begin_draw(), so
// every stratum of one iteration is conditioned on the same P_0.
class ConfounderSource {
 public:
  virtual ~ConfounderSource() = default;
  virtual Method method() const noexcept = 0;
  virtual void begin_draw() = 0;
  virtual const WeightedAtoms& stratum(std::size_t v) = 0;
  // Covariate rows the atoms of stratum v index into; nullptr means the
  // observed confounder matrix.
  virtual const Eigen::MatrixXd* support(std::size_t /*v*/) const { return nullptr; }
};

// Empirical, BB or HBB source over `strata`. The source keeps a copy of the
// partition and owns `rng`. Oracle sources come from the simulation module.
std::unique_ptr<ConfounderSource> make_bootstrap_source(Method method,
                                                        const StrataIndex& strata,
                                                        const HbbConfig& config,
                                                        RngStream rng);

}  // namespace hbb
