#include <benchmark/benchmark.h>

#include <vector>

#include "hbb/bootstrap.hpp"
#include "hbb/dists.hpp"
#include "hbb/estimands.hpp"
#include "hbb/models.hpp"
#include "hbb/rng.hpp"
#include "hbb/sim.hpp"

namespace {

using namespace hbb;

void BM_Philox(benchmark::State& state) {
  RngStream rng(1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rng());
}
BENCHMARK(BM_Philox);

void BM_Gamma(benchmark::State& state) {
  RngStream rng(1, 2);
  const double shape = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_gamma(shape, 1.0, rng));
}
BENCHMARK(BM_Gamma)->Arg(1)->Arg(100)->Arg(1000);

void BM_Dirichlet(benchmark::State& state) {
  RngStream rng(1, 2);
  const std::vector<double> alpha(static_cast<std::size_t>(state.range(0)), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(sample_dirichlet(alpha, rng));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Dirichlet)->Arg(300)->Arg(3000);

void BM_HbbStratumDraw(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<std::size_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = i % 10 == 0 ? 1 : 0;
  const StrataIndex strata(s, 2);
  RngStream rng(1, 2);
  const WeightedAtoms p0 = hbb_p0_draw(n, rng);
  const double alpha = alpha_for(n, strata.size(1), 100.0);
  for (auto _ : state) benchmark::DoNotOptimize(hbb_stratum_draw(p0, strata, 1, alpha, rng));
}
BENCHMARK(BM_HbbStratumDraw)->Arg(300)->Arg(3000);

Dataset bench_dataset(std::size_t n) {
  RngStream rng(3, 4);
  Dataset d;
  do {
    d = simulate_dataset(SimSetting::make(1, n), rng);
  } while (d.strata.size(3) == 0);
  return d;
}

void BM_GlmLogDensity(benchmark::State& state) {
  const Dataset d = bench_dataset(static_cast<std::size_t>(state.range(0)));
  const GlmLogPosterior target(d, GlmSpec{});
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(target.dimension()), 0.1);
  Eigen::VectorXd grad(beta.size());
  for (auto _ : state) benchmark::DoNotOptimize(target.evaluate(beta, &grad));
}
BENCHMARK(BM_GlmLogDensity)->Arg(300)->Arg(3000);

void BM_Standardize(benchmark::State& state) {
  const Dataset d = bench_dataset(300);
  const GlmLayout layout(StratumStructure::kSharedSlopes, d.num_strata(), d.num_confounders());
  RngStream rng(5, 6);
  Eigen::MatrixXd coef(static_cast<Eigen::Index>(state.range(0)), static_cast<Eigen::Index>(layout.num_params()));
  for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = 0.2 * rng.normal();
  const OutcomeDraws draws = OutcomeDraws::from_coefficients(Family::kLogistic, layout, coef);
  for (auto _ : state) {
    auto src = make_bootstrap_source(Method::kHierarchical, d.strata, HbbConfig{}, rng.child(1));
    ConfounderSource* sources[] = {src.get()};
    benchmark::DoNotOptimize(standardize(draws, d, sources, ContrastType::kDifference));
  }
}
BENCHMARK(BM_Standardize)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
