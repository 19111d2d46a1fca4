#include "hbb/models.hpp"

#include <cmath>
#include <string>

#include <Eigen/QR>

#include "hbb/errors.hpp"

namespace hbb {

std::string_view structure_name(StratumStructure structure) noexcept {
  return structure == StratumStructure::kSharedSlopes ? "shared" : "stratified";
}

StratumStructure parse_structure(std::string_view name) {
  if (name == "shared") return StratumStructure::kSharedSlopes;
  if (name == "stratified") return StratumStructure::kFullyStratified;
  throw ValidationError("unknown stratum structure '" + std::string(name) +
                        "' (expected shared or stratified)");
}

GlmLayout::GlmLayout(StratumStructure structure, std::size_t num_strata,
                     std::size_t num_confounders)
    : structure_(structure), num_strata_(num_strata), num_confounders_(num_confounders) {
  if (num_strata == 0) throw ValidationError("GLM layout needs at least one stratum");
}

std::size_t GlmLayout::num_params() const noexcept {
  if (structure_ == StratumStructure::kSharedSlopes) {
    return 1 + 2 * num_strata_ + num_confounders_;
  }
  return num_strata_ * (num_confounders_ + 2);
}

std::vector<std::string> GlmLayout::parameter_names(
    std::span<const std::string> confounder_names) const {
  auto covariate = [&](std::size_t j) {
    return j < confounder_names.size() ? confounder_names[j] : "w" + std::to_string(j + 1);
  };
  std::vector<std::string> names;
  names.reserve(num_params());
  if (structure_ == StratumStructure::kSharedSlopes) {
    names.emplace_back("intercept");
    for (std::size_t v = 0; v < num_strata_; ++v) names.push_back("stratum[" + std::to_string(v) + "]");
    for (std::size_t j = 0; j < num_confounders_; ++j) names.push_back(covariate(j));
    for (std::size_t v = 0; v < num_strata_; ++v) {
      names.push_back("treatment[" + std::to_string(v) + "]");
    }
  } else {
    for (std::size_t v = 0; v < num_strata_; ++v) {
      const std::string tag = "[" + std::to_string(v) + "]";
      names.push_back("intercept" + tag);
      for (std::size_t j = 0; j < num_confounders_; ++j) names.push_back(covariate(j) + tag);
      names.push_back("treatment" + tag);
    }
  }
  return names;
}

namespace {

struct PredictorTerms {
  double offset;
  Eigen::Index slope_begin;
};

PredictorTerms terms_for(const GlmLayout& layout, const Eigen::Ref<const Eigen::VectorXd>& beta,
                         int a, std::size_t v) {
  const auto k = static_cast<Eigen::Index>(layout.num_strata());
  const auto p = static_cast<Eigen::Index>(layout.num_confounders());
  const auto vi = static_cast<Eigen::Index>(v);
  if (v >= layout.num_strata()) {
    throw BoundsError("stratum " + std::to_string(v) + " out of range for the outcome model");
  }
  const double treat = a == 1 ? 1.0 : 0.0;
  if (layout.structure() == StratumStructure::kSharedSlopes) {
    return {beta[0] + beta[1 + vi] + treat * beta[1 + k + p + vi], 1 + k};
  }
  const Eigen::Index base = vi * (p + 2);
  return {beta[base] + treat * beta[base + 1 + p], base + 1};
}

}  // namespace

double GlmLayout::linear_predictor(const Eigen::Ref<const Eigen::VectorXd>& beta,
                                   std::span<const double> w_row, int a, std::size_t v) const {
  if (w_row.size() != num_confounders_) {
    throw ValidationError("covariate row has " + std::to_string(w_row.size()) +
                          " entries, model expects " + std::to_string(num_confounders_));
  }
  const PredictorTerms t = terms_for(*this, beta, a, v);
  double eta = t.offset;
  for (std::size_t j = 0; j < num_confounders_; ++j) {
    eta += w_row[j] * beta[t.slope_begin + static_cast<Eigen::Index>(j)];
  }
  return eta;
}

void GlmLayout::linear_predictors(const Eigen::Ref<const Eigen::VectorXd>& beta,
                                  const Eigen::MatrixXd& rows, int a, std::size_t v,
                                  Eigen::VectorXd& out) const {
  if (static_cast<std::size_t>(rows.cols()) != num_confounders_) {
    throw ValidationError("covariate matrix has " + std::to_string(rows.cols()) +
                          " columns, model expects " + std::to_string(num_confounders_));
  }
  const PredictorTerms t = terms_for(*this, beta, a, v);
  const Eigen::Index n = rows.rows();
  out.resize(n);
  double* dst = out.data();
  for (Eigen::Index i = 0; i < n; ++i) dst[i] = t.offset;
  // Column-outer accumulation keeps the per-row summation order identical to
  // linear_predictor(), so scalar and vectorized evaluations agree bitwise.
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double b = beta[t.slope_begin + j];
    const double* col = rows.col(j).data();
    for (Eigen::Index i = 0; i < n; ++i) dst[i] += col[i] * b;
  }
}

void GlmLayout::design_row(std::span<const double> w_row, int a, std::size_t v,
                           Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) const {
  out.setZero();
  const auto k = static_cast<Eigen::Index>(num_strata_);
  const auto p = static_cast<Eigen::Index>(num_confounders_);
  const auto vi = static_cast<Eigen::Index>(v);
  const double treat = a == 1 ? 1.0 : 0.0;
  if (structure_ == StratumStructure::kSharedSlopes) {
    out[0] = 1.0;
    out[1 + vi] = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) out[1 + k + j] = w_row[static_cast<std::size_t>(j)];
    out[1 + k + p + vi] = treat;
  } else {
    const Eigen::Index base = vi * (p + 2);
    out[base] = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) out[base + 1 + j] = w_row[static_cast<std::size_t>(j)];
    out[base + 1 + p] = treat;
  }
}

void GlmSpec::validate(const GlmLayout& layout) const {
  if (prior_sd.empty()) throw ValidationError("GLM: prior_sd must not be empty");
  if (prior_sd.size() != 1 && prior_sd.size() != layout.num_params()) {
    throw ValidationError("GLM: prior_sd has " + std::to_string(prior_sd.size()) +
                          " entries; expected 1 or " + std::to_string(layout.num_params()));
  }
  for (double sd : prior_sd) {
    if (!(sd > 0.0) || !std::isfinite(sd)) throw ValidationError("GLM: prior_sd entries must be positive");
  }
  mcmc.validate();
}

double inverse_link(Family family, double eta) noexcept {
  if (family == Family::kPoisson) return std::exp(eta);
  return 1.0 / (1.0 + std::exp(-eta));
}

namespace {

inline double log1p_exp(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

GlmLayout layout_for(const Dataset& data, StratumStructure structure) {
  return GlmLayout(structure, data.num_strata(), data.num_confounders());
}

std::span<const double> row_span(const Eigen::MatrixXd& w, std::size_t i, std::vector<double>& buf) {
  buf.resize(static_cast<std::size_t>(w.cols()));
  for (Eigen::Index j = 0; j < w.cols(); ++j) buf[static_cast<std::size_t>(j)] = w(static_cast<Eigen::Index>(i), j);
  return buf;
}

}  // namespace

GlmLogPosterior::GlmLogPosterior(const Dataset& data, const GlmSpec& spec)
    : family_(spec.family), layout_(layout_for(data, spec.structure)) {
  data.validate();
  spec.validate(layout_);
  data.check_outcome_family(spec.family);

  const auto n = static_cast<Eigen::Index>(data.num_subjects());
  const auto dim = static_cast<Eigen::Index>(layout_.num_params());
  design_.resize(n, dim);
  std::vector<double> buf;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    layout_.design_row(row_span(data.w, si, buf), data.a[si], data.strata.assignment(si),
                       design_.row(i));
  }
  y_ = Eigen::Map<const Eigen::VectorXd>(data.y.data(), n);
  prior_precision_.resize(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double sd = spec.prior_sd.size() == 1 ? spec.prior_sd[0] : spec.prior_sd[static_cast<std::size_t>(j)];
    prior_precision_[j] = 1.0 / (sd * sd);
  }
}

double GlmLogPosterior::evaluate(const Eigen::VectorXd& beta, Eigen::VectorXd* gradient) const {
  const Eigen::VectorXd eta = design_ * beta;
  double log_lik = 0.0;
  Eigen::VectorXd residual(eta.size());
  if (family_ == Family::kLogistic) {
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      log_lik += y_[i] * eta[i] - log1p_exp(eta[i]);
      residual[i] = y_[i] - inverse_link(Family::kLogistic, eta[i]);
    }
  } else {
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double mu = std::exp(eta[i]);
      log_lik += y_[i] * eta[i] - mu;
      residual[i] = y_[i] - mu;
    }
  }
  const double log_prior = -0.5 * beta.cwiseProduct(prior_precision_).dot(beta);
  if (gradient != nullptr) {
    gradient->noalias() = design_.transpose() * residual;
    *gradient -= prior_precision_.cwiseProduct(beta);
  }
  return log_lik + log_prior;
}

OutcomeDraws OutcomeDraws::from_coefficients(Family family, GlmLayout layout,
                                             Eigen::MatrixXd coefficients) {
  if (coefficients.rows() < 1) throw ValidationError("outcome draws need at least one draw");
  if (static_cast<std::size_t>(coefficients.cols()) != layout.num_params()) {
    throw ValidationError("coefficient matrix has " + std::to_string(coefficients.cols()) +
                          " columns, layout expects " + std::to_string(layout.num_params()));
  }
  OutcomeDraws out;
  out.kind_ = Kind::kGlmCoefficients;
  out.family_ = family;
  out.num_draws_ = static_cast<std::size_t>(coefficients.rows());
  out.layout_ = layout;
  out.coefficients_ = std::move(coefficients);
  return out;
}

void OutcomeDraws::check_draw(std::size_t m) const {
  if (m >= num_draws_) {
    throw BoundsError("draw index " + std::to_string(m) + " out of range (M = " +
                      std::to_string(num_draws_) + ")");
  }
}

double OutcomeDraws::mean_at(std::size_t m, int a, std::span<const double> w_row,
                             std::size_t v) const {
  check_draw(m);
  if (kind_ != Kind::kGlmCoefficients) {
    throw SpecificationError("external prediction draws are indexed by subject, not covariates");
  }
  const Eigen::VectorXd beta = coefficients_.row(static_cast<Eigen::Index>(m)).transpose();
  return inverse_link(family_, layout_.linear_predictor(beta, w_row, a, v));
}

double OutcomeDraws::mean_for_subject(std::size_t m, int a, std::size_t subject,
                                      const Dataset& data, std::size_t v) const {
  check_draw(m);
  if (subject >= data.num_subjects()) {
    throw BoundsError("subject " + std::to_string(subject) + " out of range");
  }
  if (kind_ == Kind::kExternalPredictions) {
    if (static_cast<std::size_t>(pred_a1_.rows()) != data.num_subjects()) {
      throw ValidationError("external draws cover a different number of subjects");
    }
    return predictions(a)(static_cast<Eigen::Index>(subject), static_cast<Eigen::Index>(m));
  }
  std::vector<double> buf;
  return mean_at(m, a, row_span(data.w, subject, buf), v);
}

void OutcomeDraws::means_for_subjects(std::size_t m, int a, std::size_t v, const Dataset& data,
                                      Eigen::VectorXd& out) const {
  check_draw(m);
  if (kind_ == Kind::kExternalPredictions) {
    if (static_cast<std::size_t>(pred_a1_.rows()) != data.num_subjects()) {
      throw ValidationError("external draws cover " + std::to_string(pred_a1_.rows()) +
                            " subjects, dataset has " + std::to_string(data.num_subjects()));
    }
    out = predictions(a).col(static_cast<Eigen::Index>(m));
    return;
  }
  means_for_rows(m, a, v, data.w, out);
}

void OutcomeDraws::means_for_rows(std::size_t m, int a, std::size_t v, const Eigen::MatrixXd& rows,
                                  Eigen::VectorXd& out) const {
  check_draw(m);
  if (kind_ != Kind::kGlmCoefficients) {
    throw SpecificationError("external prediction draws cannot be evaluated at new covariates");
  }
  layout_.linear_predictors(coefficients_.row(static_cast<Eigen::Index>(m)).transpose(), rows, a, v,
                            out);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = inverse_link(family_, out[i]);
}

namespace {

// Rank deficiency of the identifiable part of the design. The shared layout
// carries a global intercept next to a full set of stratum intercepts; that
// redundancy is intentional (the prior separates them) and is not reported.
std::vector<std::string> collinearity_warnings(const GlmLogPosterior& posterior,
                                               const Dataset& data) {
  std::vector<std::string> warnings;
  const GlmLayout& layout = posterior.layout();
  const Eigen::MatrixXd& x = posterior.design();
  auto rank_of = [](const Eigen::MatrixXd& m) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    qr.setThreshold(1e-10);
    return static_cast<Eigen::Index>(qr.rank());
  };
  if (layout.structure() == StratumStructure::kSharedSlopes) {
    const Eigen::MatrixXd sub = x.rightCols(x.cols() - 1);
    const Eigen::Index rank = rank_of(sub);
    if (rank < sub.cols()) {
      warnings.push_back("design is rank deficient (rank " + std::to_string(rank) + " of " +
                         std::to_string(sub.cols()) + "); the prior regularizes the fit");
    }
    return warnings;
  }
  const auto block = static_cast<Eigen::Index>(layout.num_confounders() + 2);
  for (std::size_t v = 0; v < layout.num_strata(); ++v) {
    const auto& members = data.strata.members(v);
    Eigen::MatrixXd sub(static_cast<Eigen::Index>(members.size()), block);
    for (std::size_t r = 0; r < members.size(); ++r) {
      sub.row(static_cast<Eigen::Index>(r)) =
          x.row(static_cast<Eigen::Index>(members[r])).segment(static_cast<Eigen::Index>(v) * block, block);
    }
    const Eigen::Index rank = members.empty() ? 0 : rank_of(sub);
    if (rank < block) {
      warnings.push_back("stratum " + std::to_string(v) + " design is rank deficient (rank " +
                         std::to_string(rank) + " of " + std::to_string(block) +
                         "); the prior regularizes the fit");
    }
  }
  return warnings;
}

}  // namespace

OutcomeDraws fit_glm(const Dataset& data, const GlmSpec& spec, RngStream rng) {
  const GlmLogPosterior posterior(data, spec);
  const Eigen::VectorXd initial = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(posterior.dimension()));
  McmcResult result = sample_posterior(posterior, initial, spec.mcmc, rng);
  OutcomeDraws out =
      OutcomeDraws::from_coefficients(spec.family, posterior.layout(), std::move(result.draws));
  out.diagnostics_ = result.diagnostics;
  out.warnings_ = collinearity_warnings(posterior, data);
  return out;
}

double predict_mean(const OutcomeDraws& draws, std::size_t m, int a,
                    std::span<const double> w_row, std::size_t v) {
  return draws.mean_at(m, a, w_row, v);
}

OutcomeDraws load_external_draws(Eigen::MatrixXd pred_a1, Eigen::MatrixXd pred_a0, Family family) {
  if (pred_a1.rows() != pred_a0.rows() || pred_a1.cols() != pred_a0.cols()) {
    throw ValidationError("external draws: arm matrices have different shapes (" +
                          std::to_string(pred_a1.rows()) + "x" + std::to_string(pred_a1.cols()) +
                          " vs " + std::to_string(pred_a0.rows()) + "x" +
                          std::to_string(pred_a0.cols()) + ")");
  }
  if (pred_a1.rows() < 1 || pred_a1.cols() < 1) {
    throw ValidationError("external draws: need at least one subject and one draw");
  }
  auto check_range = [family](const Eigen::MatrixXd& m, const char* arm) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double value = m(r, c);
        const bool ok = std::isfinite(value) && value >= 0.0 &&
                        (family == Family::kPoisson || value <= 1.0);
        if (!ok) {
          throw ValidationError(std::string("external draws: ") + arm + " entry (subject " +
                                std::to_string(r) + ", draw " + std::to_string(c) + ") = " +
                                std::to_string(value) + " outside the " +
                                std::string(family_name(family)) + " range");
        }
      }
    }
  };
  check_range(pred_a1, "treated-arm");
  check_range(pred_a0, "control-arm");
  OutcomeDraws out;
  out.kind_ = OutcomeDraws::Kind::kExternalPredictions;
  out.family_ = family;
  out.num_draws_ = static_cast<std::size_t>(pred_a1.cols());
  out.pred_a1_ = std::move(pred_a1);
  out.pred_a0_ = std::move(pred_a0);
  return out;
}

}  // namespace hbb
