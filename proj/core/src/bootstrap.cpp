#include "hbb/bootstrap.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hbb/errors.hpp"

namespace hbb {

StrataIndex::StrataIndex(std::vector<std::size_t> assignments, std::size_t num_strata)
    : assignments_(std::move(assignments)), members_(num_strata) {
  for (std::size_t i = 0; i < assignments_.size(); ++i) {
    const std::size_t v = assignments_[i];
    if (v >= num_strata) {
      throw BoundsError("StrataIndex: subject " + std::to_string(i) + " assigned to stratum " +
                        std::to_string(v) + " of " + std::to_string(num_strata));
    }
    members_[v].push_back(i);
  }
}

const std::vector<std::size_t>& StrataIndex::members(std::size_t v) const {
  if (v >= members_.size()) {
    throw BoundsError("stratum " + std::to_string(v) + " out of range (K = " +
                      std::to_string(members_.size()) + ")");
  }
  return members_[v];
}

void HbbConfig::validate() const {
  if (!(m_min > 0.0) || !std::isfinite(m_min)) {
    throw DomainError("HBB: m_min must be positive, got " + std::to_string(m_min));
  }
  if (alpha_override) {
    if (alpha_override->empty()) throw DomainError("HBB: empty alpha override");
    for (double a : *alpha_override) {
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw DomainError("HBB: alpha override entries must be finite and non-negative");
      }
    }
  }
}

double HbbConfig::alpha(const StrataIndex& strata, std::size_t v) const {
  if (alpha_override) {
    const auto& values = *alpha_override;
    if (values.size() == 1) return values.front();
    if (values.size() != strata.num_strata()) {
      throw ValidationError("HBB: alpha override has " + std::to_string(values.size()) +
                            " entries for " + std::to_string(strata.num_strata()) + " strata");
    }
    return values.at(v);
  }
  return alpha_for(strata.num_subjects(), strata.size(v), m_min);
}

WeightedAtoms empirical_weights(const StrataIndex& strata, std::size_t v) {
  const auto& members = strata.members(v);
  if (members.empty()) {
    throw EmptyStratumError("empirical distribution undefined for empty stratum " +
                            std::to_string(v));
  }
  const double w = 1.0 / static_cast<double>(members.size());
  return WeightedAtoms::trusted(members, std::vector<double>(members.size(), w));
}

WeightedAtoms bb_draw(const StrataIndex& strata, std::size_t v, RngStream& rng) {
  const auto& members = strata.members(v);
  if (members.empty()) {
    throw EmptyStratumError("Bayesian bootstrap undefined for empty stratum " +
                            std::to_string(v));
  }
  const std::vector<double> ones(members.size(), 1.0);
  return WeightedAtoms::trusted(members, sample_dirichlet(ones, rng));
}

WeightedAtoms hbb_p0_draw(std::size_t n, RngStream& rng) {
  if (n == 0) throw DegenerateInputError("P_0 draw needs at least one subject");
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const std::vector<double> ones(n, 1.0);
  return WeightedAtoms::trusted(std::move(ids), sample_dirichlet(ones, rng));
}

std::vector<double> hbb_concentration(const WeightedAtoms& p0, const StrataIndex& strata,
                                      std::size_t v, double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw DomainError("HBB: alpha must be finite and non-negative, got " +
                      std::to_string(alpha));
  }
  const std::size_t n = strata.num_subjects();
  const auto& ids = p0.atom_ids();
  if (ids.size() != n) {
    throw DomainError("HBB: P_0 has " + std::to_string(ids.size()) + " atoms, expected " +
                      std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] != i) throw DomainError("HBB: P_0 atoms must be subjects 0..n-1 in order");
  }
  std::vector<double> eta(n);
  const auto& pi = p0.weights();
  for (std::size_t i = 0; i < n; ++i) eta[i] = alpha * pi[i];
  for (std::size_t i : strata.members(v)) eta[i] += 1.0;
  return eta;
}

WeightedAtoms hbb_stratum_draw(const WeightedAtoms& p0, const StrataIndex& strata,
                               std::size_t v, double alpha, RngStream& rng) {
  const std::vector<double> eta = hbb_concentration(p0, strata, v, alpha);
  if (alpha == 0.0 && strata.size(v) == 0) {
    throw DegenerateInputError("HBB: alpha = 0 with empty stratum " + std::to_string(v) +
                               " leaves no mass to place");
  }
  return WeightedAtoms::trusted(p0.atom_ids(), sample_dirichlet(eta, rng));
}

double alpha_for(std::size_t n, std::size_t n_v, double m_min) {
  if (n_v == 0) {
    throw EmptyStratumError("alpha = n*M/n_v undefined for an empty stratum; supply an override");
  }
  if (n < n_v) throw DomainError("alpha_for: stratum larger than sample");
  if (!(m_min > 0.0)) throw DomainError("alpha_for: M must be positive");
  return static_cast<double>(n) * m_min / static_cast<double>(n_v);
}

double relative_mass_rho(double n, double alpha) {
  if (alpha < 0.0) throw DomainError("relative_mass_rho: alpha must be non-negative");
  if (alpha == 0.0) return std::numeric_limits<double>::infinity();
  return n / alpha + 1.0;
}

std::string_view method_name(Method method) noexcept {
  switch (method) {
    case Method::kEmpirical: return "empirical";
    case Method::kBayesianBootstrap: return "bb";
    case Method::kHierarchical: return "hbb";
    case Method::kOracle: return "oracle";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  throw ValidationError("unknown method '" + std::string(name) +
                        "' (expected empirical, bb, hbb or oracle)");
}

namespace {

class EmpiricalSource final : public ConfounderSource {
 public:
  explicit EmpiricalSource(const StrataIndex& strata) : strata_(strata), cache_(strata.num_strata()) {}
  Method method() const noexcept override { return Method::kEmpirical; }
  void begin_draw() override {}
  const WeightedAtoms& stratum(std::size_t v) override {
    if (v >= cache_.size()) strata_.members(v);
    auto& slot = cache_[v];
    if (!slot) slot = empirical_weights(strata_, v);
    return *slot;
  }

 private:
  StrataIndex strata_;
  std::vector<std::optional<WeightedAtoms>> cache_;
};

class BayesianBootstrapSource final : public ConfounderSource {
 public:
  BayesianBootstrapSource(const StrataIndex& strata, RngStream rng)
      : strata_(strata), rng_(rng), current_(strata.num_strata()) {}
  Method method() const noexcept override { return Method::kBayesianBootstrap; }
  void begin_draw() override {
    for (auto& slot : current_) slot.reset();
  }
  const WeightedAtoms& stratum(std::size_t v) override {
    if (v >= current_.size()) strata_.members(v);
    auto& slot = current_[v];
    if (!slot) slot = bb_draw(strata_, v, rng_);
    return *slot;
  }

 private:
  StrataIndex strata_;
  RngStream rng_;
  std::vector<std::optional<WeightedAtoms>> current_;
};

class HierarchicalSource final : public ConfounderSource {
 public:
  HierarchicalSource(const StrataIndex& strata, const HbbConfig& config, RngStream rng)
      : strata_(strata), rng_(rng), alphas_(strata.num_strata()), current_(strata.num_strata()) {
    config.validate();
    for (std::size_t v = 0; v < strata_.num_strata(); ++v) {
      alphas_[v] = config.alpha(strata_, v);
    }
  }
  Method method() const noexcept override { return Method::kHierarchical; }
  void begin_draw() override {
    p0_ = hbb_p0_draw(strata_.num_subjects(), rng_);
    for (auto& slot : current_) slot.reset();
  }
  const WeightedAtoms& stratum(std::size_t v) override {
    if (v >= current_.size()) strata_.members(v);
    if (p0_.empty()) throw Error("HBB source: begin_draw() must precede stratum()");
    auto& slot = current_[v];
    if (!slot) slot = hbb_stratum_draw(p0_, strata_, v, alphas_[v], rng_);
    return *slot;
  }

 private:
  StrataIndex strata_;
  RngStream rng_;
  std::vector<double> alphas_;
  WeightedAtoms p0_;
  std::vector<std::optional<WeightedAtoms>> current_;
};

}  // namespace

std::unique_ptr<ConfounderSource> make_bootstrap_source(Method method,
                                                        const StrataIndex& strata,
                                                        const HbbConfig& config,
                                                        RngStream rng) {
  switch (method) {
    case Method::kEmpirical: return std::make_unique<EmpiricalSource>(strata);
    case Method::kBayesianBootstrap:
      return std::make_unique<BayesianBootstrapSource>(strata, rng);
    case Method::kHierarchical:
      return std::make_unique<HierarchicalSource>(strata, config, rng);
    case Method::kOracle:
      break;
  }
  throw ValidationError("oracle confounder distributions need the true data-generating "
                        "process; they are only available in simulations");
}

}  // namespace hbb
