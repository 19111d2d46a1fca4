#include "hbb/dataset.hpp"

#include <cmath>
#include <string>

#include "hbb/errors.hpp"

namespace hbb {

std::string_view family_name(Family family) noexcept {
  return family == Family::kLogistic ? "logistic" : "poisson";
}

Family parse_family(std::string_view name) {
  if (name == "logistic" || name == "binomial" || name == "binary") return Family::kLogistic;
  if (name == "poisson" || name == "count") return Family::kPoisson;
  throw ValidationError("unknown outcome family '" + std::string(name) +
                        "' (expected logistic or poisson)");
}

void Dataset::validate() const {
  const std::size_t n = y.size();
  if (n == 0) throw ValidationError("dataset has no subjects");
  if (a.size() != n) throw ValidationError("treatment vector length differs from outcome");
  if (static_cast<std::size_t>(w.rows()) != n) {
    throw ValidationError("confounder matrix has " + std::to_string(w.rows()) +
                          " rows for " + std::to_string(n) + " subjects");
  }
  if (strata.num_subjects() != n) throw ValidationError("strata index covers a different n");
  if (!stratum_labels.empty() && stratum_labels.size() != strata.num_strata()) {
    throw ValidationError("stratum label count differs from number of strata");
  }
  if (!confounder_names.empty() && confounder_names.size() != num_confounders()) {
    throw ValidationError("confounder name count differs from matrix columns");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(y[i])) throw ValidationError("missing outcome for subject " + std::to_string(i));
    if (a[i] != 0 && a[i] != 1) {
      throw ValidationError("treatment for subject " + std::to_string(i) + " is not 0/1");
    }
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (std::isnan(w(static_cast<Eigen::Index>(i), j))) {
        throw ValidationError("missing confounder " + std::to_string(j) + " for subject " +
                              std::to_string(i));
      }
    }
  }
}

void Dataset::check_outcome_family(Family family) const {
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double yi = y[i];
    if (family == Family::kLogistic && yi != 0.0 && yi != 1.0) {
      throw SpecificationError("logistic family needs binary outcomes; subject " +
                               std::to_string(i) + " has " + std::to_string(yi));
    }
    if (family == Family::kPoisson && (yi < 0.0 || yi != std::floor(yi) || !std::isfinite(yi))) {
      throw SpecificationError("poisson family needs non-negative integer counts; subject " +
                               std::to_string(i) + " has " + std::to_string(yi));
    }
  }
}

}  // namespace hbb
