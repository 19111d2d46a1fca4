#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hbb/bootstrap.hpp"
#include "hbb/dataset.hpp"
#include "hbb/estimands.hpp"
#include "hbb/models.hpp"
#include "hbb/rng.hpp"

namespace hbb {

// Child-stream tags of one analysis. A simulation replicate and a standalone
// analysis of the same dataset with the same (seed, stream_id) walk exactly
// the same streams, so their posteriors agree bit for bit.
enum StreamTag : std::uint64_t {
  kDatasetStream = 1,
  kOutcomeModelStream = 2,
  kOracleStream = 3,
  kMethodStreamBase = 16,
};

RngStream method_stream(const RngStream& base, Method method) noexcept;

struct AnalysisPlan {
  GlmSpec glm;
  std::vector<Method> methods{Method::kHierarchical};
  HbbConfig hbb;
  ContrastType contrast = ContrastType::kDifference;
};

struct AnalysisResult {
  OutcomeDraws outcome;
  std::vector<HtePosterior> posteriors;  // one per plan method, then extras
};

// Bootstrap-family sources (empirical/bb/hbb) for every method in the plan.
// Oracle entries are skipped; the simulation module supplies those.
std::vector<std::unique_ptr<ConfounderSource>> make_plan_sources(const AnalysisPlan& plan,
                                                                 const StrataIndex& strata,
                                                                 const RngStream& base);

// Fit the outcome model on the kOutcomeModelStream child, then standardize
// under every plan method plus any `extra_sources`.
AnalysisResult analyze_dataset(const Dataset& data, const AnalysisPlan& plan,
                               const RngStream& base,
                               std::span<ConfounderSource* const> extra_sources = {});

// Standardize externally supplied outcome draws under the plan's methods.
std::vector<HtePosterior> analyze_with_draws(const Dataset& data, const OutcomeDraws& draws,
                                             const AnalysisPlan& plan, const RngStream& base);

}  // namespace hbb
