#include "hbb/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hbb/errors.hpp"

namespace hbb {

std::string_view contrast_name(ContrastType contrast) noexcept {
  switch (contrast) {
    case ContrastType::kDifference: return "difference";
    case ContrastType::kRiskRatio: return "risk_ratio";
    case ContrastType::kOddsRatio: return "odds_ratio";
  }
  return "unknown";
}

ContrastType parse_contrast(std::string_view name) {
  if (name == "difference") return ContrastType::kDifference;
  if (name == "risk_ratio") return ContrastType::kRiskRatio;
  if (name == "odds_ratio") return ContrastType::kOddsRatio;
  throw ValidationError("unknown contrast '" + std::string(name) +
                        "' (expected difference, risk_ratio or odds_ratio)");
}

double apply_contrast(ContrastType contrast, double mean_treated, double mean_control) {
  switch (contrast) {
    case ContrastType::kDifference:
      return mean_treated - mean_control;
    case ContrastType::kRiskRatio:
      if (mean_control == 0.0) throw ContrastError("risk ratio undefined: control-arm mean is 0");
      return mean_treated / mean_control;
    case ContrastType::kOddsRatio:
      if (!(mean_treated > 0.0 && mean_treated < 1.0 && mean_control > 0.0 && mean_control < 1.0)) {
        throw ContrastError("odds ratio undefined: arm means " + std::to_string(mean_treated) +
                            " and " + std::to_string(mean_control) + " must lie in (0, 1)");
      }
      return (mean_treated / (1.0 - mean_treated)) / (mean_control / (1.0 - mean_control));
  }
  throw ContrastError("unknown contrast");
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

PosteriorSummary summarize(std::span<const double> draws) {
  if (draws.empty()) throw ValidationError("cannot summarize zero draws");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double d : draws) total += d;
  PosteriorSummary s;
  s.mean = total / static_cast<double>(draws.size());
  s.q025 = quantile_sorted(sorted, 0.025);
  s.q975 = quantile_sorted(sorted, 0.975);
  s.width = s.q975 - s.q025;
  return s;
}

namespace {

double weighted_sum(const WeightedAtoms& pv, const Eigen::VectorXd& values) {
  const auto& ids = pv.atom_ids();
  const auto& weights = pv.weights();
  const auto n = static_cast<std::size_t>(values.size());
  double total = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= n) {
      throw BoundsError("atom " + std::to_string(ids[k]) + " out of range (" + std::to_string(n) +
                        " rows)");
    }
    total += weights[k] * values[static_cast<Eigen::Index>(ids[k])];
  }
  return total;
}

ContrastPosterior finish(std::vector<double> draws) {
  ContrastPosterior out;
  out.summary = summarize(draws);
  out.draws = std::move(draws);
  return out;
}

}  // namespace

double arm_mean(const OutcomeDraws& draws, std::size_t m, int a, const WeightedAtoms& pv,
                const Dataset& data, std::size_t v) {
  Eigen::VectorXd mu;
  draws.means_for_subjects(m, a, v, data, mu);
  return weighted_sum(pv, mu);
}

double arm_mean(const OutcomeDraws& draws, std::size_t m, int a, const WeightedAtoms& pv,
                const Eigen::MatrixXd& rows, std::size_t v) {
  Eigen::VectorXd mu;
  draws.means_for_rows(m, a, v, rows, mu);
  return weighted_sum(pv, mu);
}

ContrastPosterior hte_draws(const OutcomeDraws& draws, const AtomSource& pv_source,
                            const Dataset& data, std::size_t v, ContrastType contrast) {
  if (v >= data.num_strata()) throw BoundsError("stratum " + std::to_string(v) + " out of range");
  std::vector<double> psi(draws.num_draws());
  for (std::size_t m = 0; m < draws.num_draws(); ++m) {
    const WeightedAtoms pv = pv_source(m);
    psi[m] = apply_contrast(contrast, arm_mean(draws, m, 1, pv, data, v),
                            arm_mean(draws, m, 0, pv, data, v));
  }
  return finish(std::move(psi));
}

ContrastPosterior marginal_ate_draws(const OutcomeDraws& draws, const AtomSource& joint_source,
                                     const Dataset& data, ContrastType contrast) {
  const auto n = static_cast<Eigen::Index>(data.num_subjects());
  std::vector<double> psi(draws.num_draws());
  Eigen::VectorXd own1(n), own0(n), tmp;
  for (std::size_t m = 0; m < draws.num_draws(); ++m) {
    for (std::size_t v = 0; v < data.num_strata(); ++v) {
      const auto& members = data.strata.members(v);
      if (members.empty()) continue;
      draws.means_for_subjects(m, 1, v, data, tmp);
      for (std::size_t i : members) own1[static_cast<Eigen::Index>(i)] = tmp[static_cast<Eigen::Index>(i)];
      draws.means_for_subjects(m, 0, v, data, tmp);
      for (std::size_t i : members) own0[static_cast<Eigen::Index>(i)] = tmp[static_cast<Eigen::Index>(i)];
    }
    const WeightedAtoms pj = joint_source(m);
    psi[m] = apply_contrast(contrast, weighted_sum(pj, own1), weighted_sum(pj, own0));
  }
  return finish(std::move(psi));
}

std::vector<HtePosterior> standardize(const OutcomeDraws& draws, const Dataset& data,
                                      std::span<ConfounderSource* const> sources,
                                      ContrastType contrast) {
  const std::size_t num_strata = data.num_strata();
  const std::size_t num_draws = draws.num_draws();
  std::vector<HtePosterior> out(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    out[s].method = sources[s]->method();
    out[s].contrast = contrast;
    out[s].strata.resize(num_strata);
    for (std::size_t v = 0; v < num_strata; ++v) {
      out[s].strata[v].stratum = v;
      out[s].strata[v].posterior.draws.reserve(num_draws);
    }
  }

  std::vector<Eigen::VectorXd> subject_mu1(num_strata), subject_mu0(num_strata);
  std::vector<char> cached(num_strata);
  Eigen::VectorXd rows_mu1, rows_mu0;

  for (std::size_t m = 0; m < num_draws; ++m) {
    std::fill(cached.begin(), cached.end(), 0);
    for (std::size_t s = 0; s < sources.size(); ++s) {
      ConfounderSource& source = *sources[s];
      auto& strata_out = out[s].strata;
      try {
        source.begin_draw();
      } catch (const Error& e) {
        for (auto& r : strata_out) {
          if (r.ok()) r.failure = e.what();
        }
        continue;
      }
      for (std::size_t v = 0; v < num_strata; ++v) {
        StratumResult& result = strata_out[v];
        if (!result.ok()) continue;
        try {
          const WeightedAtoms& pv = source.stratum(v);
          double mean1, mean0;
          if (const Eigen::MatrixXd* rows = source.support(v)) {
            draws.means_for_rows(m, 1, v, *rows, rows_mu1);
            draws.means_for_rows(m, 0, v, *rows, rows_mu0);
            mean1 = weighted_sum(pv, rows_mu1);
            mean0 = weighted_sum(pv, rows_mu0);
          } else {
            if (!cached[v]) {
              draws.means_for_subjects(m, 1, v, data, subject_mu1[v]);
              draws.means_for_subjects(m, 0, v, data, subject_mu0[v]);
              cached[v] = 1;
            }
            mean1 = weighted_sum(pv, subject_mu1[v]);
            mean0 = weighted_sum(pv, subject_mu0[v]);
          }
          result.posterior.draws.push_back(apply_contrast(contrast, mean1, mean0));
        } catch (const Error& e) {
          result.failure = e.what();
          result.posterior.draws.clear();
        }
      }
    }
  }

  for (auto& posterior : out) {
    for (auto& r : posterior.strata) {
      if (r.ok()) r.posterior.summary = summarize(r.posterior.draws);
    }
  }
  return out;
}

}  // namespace hbb
