#include "hbb/pipeline.hpp"

namespace hbb {

RngStream method_stream(const RngStream& base, Method method) noexcept {
  return base.child(kMethodStreamBase + static_cast<std::uint64_t>(method));
}

std::vector<std::unique_ptr<ConfounderSource>> make_plan_sources(const AnalysisPlan& plan,
                                                                 const StrataIndex& strata,
                                                                 const RngStream& base) {
  std::vector<std::unique_ptr<ConfounderSource>> sources;
  for (Method method : plan.methods) {
    if (method == Method::kOracle) continue;
    sources.push_back(make_bootstrap_source(method, strata, plan.hbb, method_stream(base, method)));
  }
  return sources;
}

namespace {

std::vector<HtePosterior> run_sources(const Dataset& data, const OutcomeDraws& draws,
                                      const AnalysisPlan& plan, const RngStream& base,
                                      std::span<ConfounderSource* const> extra_sources) {
  const auto owned = make_plan_sources(plan, data.strata, base);
  std::vector<ConfounderSource*> sources;
  for (const auto& s : owned) sources.push_back(s.get());
  sources.insert(sources.end(), extra_sources.begin(), extra_sources.end());
  return standardize(draws, data, sources, plan.contrast);
}

}  // namespace

AnalysisResult analyze_dataset(const Dataset& data, const AnalysisPlan& plan, const RngStream& base,
                               std::span<ConfounderSource* const> extra_sources) {
  AnalysisResult result{fit_glm(data, plan.glm, base.child(kOutcomeModelStream)), {}};
  result.posteriors = run_sources(data, result.outcome, plan, base, extra_sources);
  return result;
}

std::vector<HtePosterior> analyze_with_draws(const Dataset& data, const OutcomeDraws& draws,
                                             const AnalysisPlan& plan, const RngStream& base) {
  return run_sources(data, draws, plan, base, {});
}

}  // namespace hbb
