#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hbb/bootstrap.hpp"

namespace hbb {

enum class Family { kLogistic, kPoisson };

std::string_view family_name(Family family) noexcept;
// "logistic" / "binomial" or "poisson". Throws ValidationError.
Family parse_family(std::string_view name);

// Observed data {Y_i, A_i, W_i, V_i}, i = 0..n-1.
struct Dataset {
  std::vector<double> y;
  std::vector<int> a;
  Eigen::MatrixXd w;  // n x p confounders, categorical columns pre-encoded
  StrataIndex strata;
  std::vector<std::string> stratum_labels;     // one per stratum
  std::vector<std::string> confounder_names;   // one per column of w, or empty

  std::size_t num_subjects() const noexcept { return y.size(); }
  std::size_t num_confounders() const noexcept { return static_cast<std::size_t>(w.cols()); }
  std::size_t num_strata() const noexcept { return strata.num_strata(); }

  // Shapes agree, n >= 1, treatment in {0,1}, no NaN anywhere. Throws
  // ValidationError naming the first offending subject.
  void validate() const;
  // Outcomes fit the family: {0,1} for logistic, non-negative integers for
  // Poisson. Throws SpecificationError.
  void check_outcome_family(Family family) const;
};

}  // namespace hbb
