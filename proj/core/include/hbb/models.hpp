#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hbb/dataset.hpp"
#include "hbb/mcmc.hpp"
#include "hbb/rng.hpp"

namespace hbb {

enum class StratumStructure {
  // g^{-1}(w0 + w_v + W'w_W + w*_v A): shared covariate slopes, a stratum
  // intercept and a stratum treatment effect.
  kSharedSlopes,
  // g^{-1}(b0_v + W'b_v + bA_v A): every coefficient stratum-specific.
  kFullyStratified,
};

std::string_view structure_name(StratumStructure structure) noexcept;
// "shared" or "stratified". Throws ValidationError.
StratumStructure parse_structure(std::string_view name);

// Parameter layout of a GLM with K strata and p confounders.
//
// Shared slopes:     [w0, w_1..w_K, w_W (p), w*_1..w*_K]   -> 1 + 2K + p
// Fully stratified:  K blocks of [b0_v, b_v (p), bA_v]      -> K (p + 2)
class GlmLayout {
 public:
  GlmLayout() = default;
  GlmLayout(StratumStructure structure, std::size_t num_strata, std::size_t num_confounders);

  StratumStructure structure() const noexcept { return structure_; }
  std::size_t num_strata() const noexcept { return num_strata_; }
  std::size_t num_confounders() const noexcept { return num_confounders_; }
  std::size_t num_params() const noexcept;
  std::vector<std::string> parameter_names(std::span<const std::string> confounder_names = {}) const;

  // Linear predictor at one covariate row.
  double linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& beta,
                          std::span<const double> w_row, int a, std::size_t v) const;
  // Linear predictors for every row of `rows` with treatment a in stratum v.
  void linear_predictors(const Eigen::Ref<const Eigen::VectorXd>& beta, const Eigen::MatrixXd& rows,
                         int a, std::size_t v, Eigen::VectorXd& out) const;
  // Design row of subject with covariates w, treatment a, stratum v.
  void design_row(std::span<const double> w_row, int a, std::size_t v,
                  Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const;

 private:
  StratumStructure structure_ = StratumStructure::kSharedSlopes;
  std::size_t num_strata_ = 0;
  std::size_t num_confounders_ = 0;
};

struct GlmSpec {
  Family family = Family::kLogistic;
  StratumStructure structure = StratumStructure::kSharedSlopes;
  // Independent N(0, sd^2) priors; a single entry is broadcast to every
  // coefficient, otherwise one entry per coefficient in layout order.
  std::vector<double> prior_sd{3.0};
  McmcConfig mcmc;

  void validate(const GlmLayout& layout) const;
};

double inverse_link(Family family, double eta) noexcept;

// Log posterior of a GLM under independent Gaussian priors, with gradient.
class GlmLogPosterior final : public LogDensity {
 public:
  GlmLogPosterior(const Dataset& data, const GlmSpec& spec);

  std::size_t dimension() const noexcept override { return layout_.num_params(); }
  double evaluate(const Eigen::VectorXd& beta, Eigen::VectorXd* gradient) const override;

  const GlmLayout& layout() const noexcept { return layout_; }
  const Eigen::MatrixXd& design() const noexcept { return design_; }

 private:
  Family family_;
  GlmLayout layout_;
  Eigen::MatrixXd design_;
  Eigen::VectorXd y_;
  Eigen::VectorXd prior_precision_;
};

// M posterior draws of the outcome regression mu^(m)(a, w, v).
//
// Either GLM coefficient vectors (evaluable anywhere) or externally supplied
// n x M prediction matrices, one per arm, evaluated at each subject's own
// covariates and stratum. Immutable once built.
class OutcomeDraws {
 public:
  enum class Kind { kGlmCoefficients, kExternalPredictions };

  // `coefficients` is M x num_params, one draw per row.
  static OutcomeDraws from_coefficients(Family family, GlmLayout layout,
                                        Eigen::MatrixXd coefficients);

  Kind kind() const noexcept { return kind_; }
  Family family() const noexcept { return family_; }
  std::size_t num_draws() const noexcept { return num_draws_; }
  // GLM kind only.
  const GlmLayout& layout() const noexcept { return layout_; }
  const Eigen::MatrixXd& coefficients() const noexcept { return coefficients_; }
  // External kind only: n x M.
  const Eigen::MatrixXd& predictions(int a) const noexcept { return a == 1 ? pred_a1_ : pred_a0_; }

  const McmcDiagnostics& diagnostics() const noexcept { return diagnostics_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  // mu^(m)(a, w_row, v) for GLM draws. Throws SpecificationError for the
  // external kind, which has no covariate-level evaluation.
  double mean_at(std::size_t m, int a, std::span<const double> w_row, std::size_t v) const;
  // mu^(m)(a, W_subject, v). External draws return the stored entry.
  double mean_for_subject(std::size_t m, int a, std::size_t subject, const Dataset& data,
                          std::size_t v) const;
  // Vectorized forms used by standardization.
  void means_for_subjects(std::size_t m, int a, std::size_t v, const Dataset& data,
                          Eigen::VectorXd& out) const;
  void means_for_rows(std::size_t m, int a, std::size_t v, const Eigen::MatrixXd& rows,
                      Eigen::VectorXd& out) const;

 private:
  friend OutcomeDraws fit_glm(const Dataset&, const GlmSpec&, RngStream);
  friend OutcomeDraws load_external_draws(Eigen::MatrixXd, Eigen::MatrixXd, Family);

  void check_draw(std::size_t m) const;

  Kind kind_ = Kind::kGlmCoefficients;
  Family family_ = Family::kLogistic;
  std::size_t num_draws_ = 0;
  GlmLayout layout_;
  Eigen::MatrixXd coefficients_;
  Eigen::MatrixXd pred_a1_, pred_a0_;
  McmcDiagnostics diagnostics_;
  std::vector<std::string> warnings_;
};

// Posterior draws of a Bayesian GLM, chain started at beta = 0.
// Throws SpecificationError for a family/outcome mismatch and
// InitializationError for a non-finite log posterior at zero. Near-collinear
// designs only add a warning.
OutcomeDraws fit_glm(const Dataset& data, const GlmSpec& spec, RngStream rng);

// mu^(m)(a, w_row, v). Logistic -> expit, Poisson -> exp of the linear
// predictor. Throws BoundsError for m >= M.
double predict_mean(const OutcomeDraws& draws, std::size_t m, int a,
                    std::span<const double> w_row, std::size_t v);

// Wraps two n x M prediction matrices (rows = subjects, columns = draws).
// Throws ValidationError on shape mismatch or values outside the family's
// range ([0,1] for logistic, >= 0 for Poisson).
OutcomeDraws load_external_draws(Eigen::MatrixXd pred_a1, Eigen::MatrixXd pred_a0, Family family);

}  // namespace hbb
