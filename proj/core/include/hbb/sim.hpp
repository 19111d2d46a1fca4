#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hbb/bootstrap.hpp"
#include "hbb/dataset.hpp"
#include "hbb/dists.hpp"
#include "hbb/estimands.hpp"
#include "hbb/mcmc.hpp"
#include "hbb/rng.hpp"

namespace hbb {

inline constexpr std::size_t kSimStrata = 4;

// One of the four data-generating processes of the simulation study.
//
//   V ~ Categorical(stratum_probs)
//   W | V=v per setting (p i.i.d. coordinates):
//     1: N(0, 1)   2: N(mu_v, 1)   3: Bernoulli(p_v)   4: Gamma(tau_v / 2, rate 1/2)
//   A ~ Bernoulli(expit(eta_v + W'beta))
//   Y ~ Bernoulli(expit(-1 + gamma_v + W'theta + alpha_v A))
struct SimSetting {
  int id = 1;
  std::size_t n = 300;
  std::size_t p = 10;
  std::array<double, kSimStrata> stratum_probs{0.4, 0.3, 0.2, 0.1};
  std::vector<double> beta;   // treatment model slopes, size p
  std::vector<double> theta;  // outcome model slopes, size p
  std::array<double, kSimStrata> eta{0.0, -0.5, 0.5, 0.5};
  std::array<double, kSimStrata> gamma{-0.1, -0.5, 0.1, 0.5};
  std::array<double, kSimStrata> alpha{1.0, -1.5, 1.0, 1.5};
  std::array<double, kSimStrata> normal_means{-2.0, 0.0, 2.0, 4.0};
  std::array<double, kSimStrata> bernoulli_probs{0.8, 0.6, 0.4, 0.2};
  std::array<double, kSimStrata> gamma_tau{8.0, 6.0, 4.0, 1.0};

  // Defaults for setting `id` with beta = theta = (1, -1, 1, -1, ...).
  // Throws DomainError for id outside 1..4.
  static SimSetting make(int id, std::size_t n = 300, std::size_t p = 10);

  void validate() const;
  std::string name() const;
  // Hash of every parameter that affects the confounder or outcome law.
  std::uint64_t fingerprint() const;
};

// Draws one confounder row for stratum v into `out` (size p).
void sample_confounders(const SimSetting& setting, std::size_t v, RngStream& rng,
                        std::span<double> out);

// n subjects from the setting. Strata are labelled "1".."4"; empty strata
// are kept (callers decide whether to regenerate).
Dataset simulate_dataset(const SimSetting& setting, RngStream& rng);

// Monte Carlo draws from the true P_v(W), uniformly weighted. Atom ids index
// rows of `rows`, not subjects.
struct OracleAtoms {
  Eigen::MatrixXd rows;
  WeightedAtoms atoms;
};

OracleAtoms oracle_weights(const SimSetting& setting, std::size_t v, std::size_t n_mc,
                           RngStream& rng);

// Confounder source integrating over the true stratum distributions; the
// same n_mc atoms are reused for every posterior iteration.
class OracleSource final : public ConfounderSource {
 public:
  OracleSource(const SimSetting& setting, std::size_t n_mc, const RngStream& rng);
  Method method() const noexcept override { return Method::kOracle; }
  void begin_draw() override {}
  const WeightedAtoms& stratum(std::size_t v) override;
  const Eigen::MatrixXd* support(std::size_t v) const override;

 private:
  std::vector<OracleAtoms> strata_;
};

struct TruthEstimate {
  double value = 0.0;
  double mc_se = 0.0;
  std::size_t n_mc = 0;
};

// Monte Carlo estimate of the true risk difference
// E[expit(-1 + gamma_v + W'theta + alpha_v) - expit(-1 + gamma_v + W'theta)]
// over W ~ P_v, from exactly n_mc draws.
TruthEstimate true_hte(const SimSetting& setting, std::size_t v, std::size_t n_mc,
                       RngStream& rng);

// Process-wide cache of true_hte on a fixed stream per (setting, v). Starts
// at n_mc draws and keeps drawing (up to 16 n_mc) until the MC standard error
// is below 1e-4. Thread-safe; repeated calls return bit-identical values.
TruthEstimate cached_true_hte(const SimSetting& setting, std::size_t v,
                              std::size_t n_mc = 1'000'000);

struct StudyConfig {
  std::size_t n_replicates = 200;
  std::vector<Method> methods{Method::kEmpirical, Method::kBayesianBootstrap,
                              Method::kHierarchical, Method::kOracle};
  double m_min = 100.0;
  McmcConfig mcmc{};
  double prior_sd = 3.0;
  std::size_t oracle_atoms = 5000;
  std::size_t truth_draws = 1'000'000;
  // Execution resource only; results do not depend on it.
  std::size_t workers = 1;

  void validate() const;
};

// Per-replicate posterior summary of one (stratum, method) cell.
struct ReplicateCell {
  bool ok = false;
  PosteriorSummary summary;
  std::string failure;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::uint64_t stream_id = 0;     // key of the stream the replicate ran on
  std::size_t regenerations = 0;   // datasets discarded for an empty stratum
  std::vector<std::size_t> stratum_sizes;
  std::string failure;             // whole-replicate failure (e.g. model fit)
  // cells[method_index][stratum], method_index following StudyConfig::methods.
  std::vector<std::vector<ReplicateCell>> cells;
};

struct CellMetrics {
  std::size_t stratum = 0;
  Method method = Method::kHierarchical;
  std::size_t replicates = 0;  // replicates contributing
  std::size_t failures = 0;    // replicates excluded
  double truth = 0.0;
  double truth_se = 0.0;
  double mse = 0.0;
  double bias = 0.0;           // signed: mean posterior mean - truth
  double abs_bias = 0.0;
  double variance = 0.0;       // sample variance of posterior means; NaN if replicates < 2
  double mean_interval_width = 0.0;
  double coverage = 0.0;
};

struct SimReport {
  SimSetting setting;
  StudyConfig config;
  std::uint64_t seed = 0;
  std::uint64_t base_stream = 0;
  std::vector<TruthEstimate> truths;  // per stratum
  std::vector<CellMetrics> cells;     // stratum-major, methods in config order
  std::vector<ReplicateRecord> replicates;
  std::size_t total_regenerations = 0;

  const CellMetrics& cell(std::size_t stratum, Method method) const;
};

// Stream of replicate r, attempt k (attempts > 0 are regenerations).
RngStream replicate_stream(const RngStream& base, int setting_id, std::size_t replicate,
                           std::size_t attempt) noexcept;

// Metrics for one cell from per-replicate summaries.
CellMetrics aggregate_cell(std::span<const ReplicateCell> cells, double truth);

// Runs the study: per replicate simulate (regenerating datasets with an
// empty stratum), fit the shared-slope logistic GLM, standardize under every
// requested method, then aggregate in replicate order. Bit-reproducible for
// a given (rng, setting, config) regardless of config.workers.
SimReport run_study(const SimSetting& setting, const StudyConfig& config, const RngStream& rng);

}  // namespace hbb
