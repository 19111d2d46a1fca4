#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hbb/bootstrap.hpp"
#include "hbb/dataset.hpp"
#include "hbb/dists.hpp"
#include "hbb/models.hpp"

namespace hbb {

enum class ContrastType { kDifference, kRiskRatio, kOddsRatio };

std::string_view contrast_name(ContrastType contrast) noexcept;
// "difference", "risk_ratio", "odds_ratio". Throws ValidationError.
ContrastType parse_contrast(std::string_view name);

// Contrast of two arm means. Throws ContrastError when undefined: a zero
// control mean for the risk ratio, an arm mean outside (0,1) for the odds
// ratio.
double apply_contrast(ContrastType contrast, double mean_treated, double mean_control);

struct PosteriorSummary {
  double mean = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double width = 0.0;  // q975 - q025
};

// Linear-interpolation quantile of sorted data (R's type 7).
double quantile_sorted(std::span<const double> sorted, double prob);
// Mean and equal-tailed 95% interval of `draws`.
PosteriorSummary summarize(std::span<const double> draws);

struct ContrastPosterior {
  std::vector<double> draws;
  PosteriorSummary summary;
};

struct StratumResult {
  std::size_t stratum = 0;
  ContrastPosterior posterior;
  std::string failure;  // non-empty when the stratum could not be computed
  bool ok() const noexcept { return failure.empty(); }
};

// Posterior of Psi(v) for every stratum under one confounder method.
struct HtePosterior {
  Method method = Method::kHierarchical;
  ContrastType contrast = ContrastType::kDifference;
  std::vector<StratumResult> strata;
};

// sum_k pv.weight_k * mu^(m)(a, W_{atom_k}, v), atoms indexing rows of the
// observed confounder matrix. Throws BoundsError for an atom id >= n.
double arm_mean(const OutcomeDraws& draws, std::size_t m, int a, const WeightedAtoms& pv,
                const Dataset& data, std::size_t v);
// Same, with atoms indexing rows of a synthetic covariate matrix.
double arm_mean(const OutcomeDraws& draws, std::size_t m, int a, const WeightedAtoms& pv,
                const Eigen::MatrixXd& rows, std::size_t v);

// One confounder-distribution draw per outcome draw m.
using AtomSource = std::function<WeightedAtoms(std::size_t m)>;

// M draws of Psi(v), pairing outcome draw m with source(m).
ContrastPosterior hte_draws(const OutcomeDraws& draws, const AtomSource& pv_source,
                            const Dataset& data, std::size_t v, ContrastType contrast);

// M draws of the marginal contrast; source(m) spans all n subjects and the
// regression is evaluated at each subject's own stratum.
ContrastPosterior marginal_ate_draws(const OutcomeDraws& draws, const AtomSource& joint_source,
                                     const Dataset& data, ContrastType contrast);

// Psi(v) posteriors for every stratum and every source in one pass over the
// outcome draws. Sources advance in lockstep: for each m, each source gets
// begin_draw() followed by stratum(0..K-1). Failures (empty strata, contrast
// domain errors) are recorded per stratum rather than thrown.
std::vector<HtePosterior> standardize(const OutcomeDraws& draws, const Dataset& data,
                                      std::span<ConfounderSource* const> sources,
                                      ContrastType contrast);

}  // namespace hbb
