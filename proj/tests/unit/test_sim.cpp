#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "hbb/errors.hpp"
#include "hbb/sim.hpp"
#include "support/stat_oracles.hpp"

namespace hbb {
namespace {

using testing::expit;

StudyConfig small_study(std::size_t replicates) {
  StudyConfig c;
  c.n_replicates = replicates;
  c.mcmc.n_draws = 200;
  c.mcmc.n_burnin = 200;
  c.oracle_atoms = 500;
  c.truth_draws = 20000;
  return c;
}

TEST(SimSetting, MakeAndValidate) {
  const SimSetting s = SimSetting::make(3);
  EXPECT_EQ(s.n, 300u);
  EXPECT_EQ(s.p, 10u);
  EXPECT_EQ(s.beta[0], 1.0);
  EXPECT_EQ(s.beta[1], -1.0);
  EXPECT_EQ(s.theta, s.beta);
  EXPECT_EQ(s.name(), "bernoulli-mixture");
  EXPECT_THROW(SimSetting::make(9), DomainError);
  EXPECT_THROW(SimSetting::make(0), DomainError);
  EXPECT_NE(SimSetting::make(1).fingerprint(), SimSetting::make(2).fingerprint());
  EXPECT_EQ(SimSetting::make(4, 50).fingerprint(), SimSetting::make(4, 300).fingerprint());
}

TEST(SimulateDataset, MeanStratumSizes) {
  const SimSetting s = SimSetting::make(1);
  std::vector<double> totals(4, 0.0);
  for (std::uint64_t r = 0; r < 1000; ++r) {
    RngStream rng(100, r);
    const Dataset d = simulate_dataset(s, rng);
    for (std::size_t v = 0; v < 4; ++v) totals[v] += static_cast<double>(d.strata.size(v));
  }
  const double expected[] = {120, 90, 60, 30};
  for (std::size_t v = 0; v < 4; ++v) EXPECT_NEAR(totals[v] / 1000.0, expected[v], 2.0);
}

TEST(SimulateDataset, BernoulliConfounders) {
  const SimSetting s = SimSetting::make(3);
  double ones = 0.0, count = 0.0;
  for (std::uint64_t r = 0; r < 50; ++r) {
    RngStream rng(101, r);
    const Dataset d = simulate_dataset(s, rng);
    for (Eigen::Index i = 0; i < d.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < d.w.cols(); ++j) {
        const double x = d.w(i, j);
        ASSERT_TRUE(x == 0.0 || x == 1.0);
        if (d.strata.assignment(static_cast<std::size_t>(i)) == 0) {
          ones += x;
          count += 1.0;
        }
      }
    }
  }
  EXPECT_NEAR(ones / count, 0.8, 0.02);
}

TEST(SimulateDataset, GaussianMixtureMeans) {
  const SimSetting s = SimSetting::make(2);
  std::vector<double> sum(10, 0.0);
  double count = 0.0;
  for (std::uint64_t r = 0; r < 50; ++r) {
    RngStream rng(102, r);
    const Dataset d = simulate_dataset(s, rng);
    for (std::size_t i : d.strata.members(3)) {
      for (int j = 0; j < 10; ++j) sum[static_cast<std::size_t>(j)] += d.w(static_cast<Eigen::Index>(i), j);
      count += 1.0;
    }
  }
  for (double t : sum) EXPECT_NEAR(t / count, 4.0, 0.2);
}

TEST(SimulateDataset, TreatmentAndOutcomeRates) {
  // Independent Monte Carlo of P(A=1 | V=v) and P(Y=1 | V=v) in setting 1.
  const SimSetting s = SimSetting::make(1);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  std::vector<double> pa(4, 0.0), py(4, 0.0);
  const int mc = 400000;
  for (std::size_t v = 0; v < 4; ++v) {
    for (int k = 0; k < mc; ++k) {
      double lin = 0.0;
      for (int j = 0; j < 10; ++j) lin += (j % 2 == 0 ? 1.0 : -1.0) * z(gen);
      const double a = expit(s.eta[v] + lin);
      pa[v] += a;
      py[v] += a * expit(-1 + s.gamma[v] + lin + s.alpha[v]) + (1 - a) * expit(-1 + s.gamma[v] + lin);
    }
    pa[v] /= mc;
    py[v] /= mc;
  }
  std::vector<double> na(4, 0), ny(4, 0), nv(4, 0);
  for (std::uint64_t r = 0; r < 400; ++r) {
    RngStream rng(103, r);
    const Dataset d = simulate_dataset(s, rng);
    for (std::size_t i = 0; i < d.num_subjects(); ++i) {
      const std::size_t v = d.strata.assignment(i);
      nv[v] += 1;
      na[v] += d.a[i];
      ny[v] += d.y[i];
    }
  }
  for (std::size_t v = 0; v < 4; ++v) {
    const double se_a = std::sqrt(pa[v] * (1 - pa[v]) / nv[v]);
    const double se_y = std::sqrt(py[v] * (1 - py[v]) / nv[v]);
    EXPECT_NEAR(na[v] / nv[v], pa[v], 4 * se_a + 0.002) << "stratum " << v;
    EXPECT_NEAR(ny[v] / nv[v], py[v], 4 * se_y + 0.002) << "stratum " << v;
  }
}

TEST(OracleWeights, StandardNormalAtoms) {
  RngStream rng(104, 1);
  const std::size_t n_mc = 5000;
  const OracleAtoms o = oracle_weights(SimSetting::make(1), 2, n_mc, rng);
  EXPECT_EQ(o.rows.rows(), 5000);
  EXPECT_EQ(o.atoms.size(), n_mc);
  EXPECT_NEAR(o.atoms.weights()[17], 1.0 / n_mc, 1e-18);
  EXPECT_NEAR(o.rows.mean(), 0.0, 3.0 / std::sqrt(n_mc * 10.0));
}

TEST(OracleWeights, GammaAtomsMean) {
  RngStream rng(104, 2);
  const OracleAtoms o = oracle_weights(SimSetting::make(4), 3, 20000, rng);
  // Gamma(shape 1/2, rate 1/2): mean 1, sd sqrt(2).
  EXPECT_NEAR(o.rows.mean(), 1.0, 4.0 * std::sqrt(2.0 / (20000.0 * 10.0)));
  EXPECT_GT(o.rows.minCoeff(), 0.0);
}

TEST(OracleWeights, SingleAtomAndErrors) {
  RngStream rng(104, 3);
  const OracleAtoms o = oracle_weights(SimSetting::make(2), 0, 1, rng);
  EXPECT_EQ(o.atoms.weights(), std::vector<double>{1.0});
  EXPECT_THROW(oracle_weights(SimSetting::make(2), 0, 0, rng), DomainError);
  EXPECT_THROW(oracle_weights(SimSetting::make(2), 4, 10, rng), DomainError);
}

TEST(TrueHte, NoCovariateDependence) {
  SimSetting s = SimSetting::make(2);
  s.theta.assign(s.p, 0.0);
  for (std::size_t v = 0; v < 4; ++v) {
    RngStream rng(105, v);
    const TruthEstimate t = true_hte(s, v, 10000, rng);
    const double exact = expit(-1 + s.gamma[v] + s.alpha[v]) - expit(-1 + s.gamma[v]);
    EXPECT_NEAR(t.value, exact, 3 * t.mc_se + 1e-12);
  }
}

TEST(TrueHte, IndependentRunsAgree) {
  const SimSetting s = SimSetting::make(1);
  for (std::size_t v = 0; v < 4; ++v) {
    RngStream a(106, 2 * v), b(106, 2 * v + 1);
    const TruthEstimate x = true_hte(s, v, 200000, a), y = true_hte(s, v, 200000, b);
    EXPECT_LT(std::abs(x.value - y.value), 3 * std::hypot(x.mc_se, y.mc_se));
  }
}

TEST(TrueHte, CacheIsStableAndPrecise) {
  const SimSetting s = SimSetting::make(1);
  const TruthEstimate a = cached_true_hte(s, 3);
  const TruthEstimate b = cached_true_hte(s, 3);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.n_mc, b.n_mc);
  EXPECT_LT(a.mc_se, 1e-4);
  EXPECT_GE(a.n_mc, 1000000u);
}

TEST(AggregateCell, MetricIdentityProperty) {
  RngStream gen(107, 0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = 1 + static_cast<std::size_t>(gen.uniform() * 60);
    std::vector<ReplicateCell> cells(r);
    for (auto& c : cells) {
      c.ok = gen.uniform() > 0.1;
      if (!c.ok) {
        c.failure = "x";
        continue;
      }
      c.summary.mean = gen.normal() * 0.2;
      c.summary.q025 = c.summary.mean - 0.3 * gen.uniform();
      c.summary.q975 = c.summary.mean + 0.3 * gen.uniform();
      c.summary.width = c.summary.q975 - c.summary.q025;
    }
    const double truth = 0.1 * gen.normal();
    const CellMetrics m = aggregate_cell(cells, truth);
    ASSERT_EQ(m.replicates + m.failures, r);
    if (m.replicates == 0) {
      ASSERT_TRUE(std::isnan(m.mse));
      continue;
    }
    ASSERT_GE(m.coverage, 0.0);
    ASSERT_LE(m.coverage, 1.0);
    ASSERT_EQ(m.abs_bias, std::abs(m.bias));
    if (m.replicates == 1) {
      ASSERT_TRUE(std::isnan(m.variance));
      ASSERT_NEAR(m.mse, m.bias * m.bias, 1e-12);
      continue;
    }
    const double rr = static_cast<double>(m.replicates);
    ASSERT_LT(std::abs(m.mse - (m.bias * m.bias + m.variance * (rr - 1) / rr)), 1e-9);
  }
}

TEST(AggregateCell, HandComputed) {
  std::vector<ReplicateCell> cells(3);
  const double means[] = {0.1, 0.3, 0.5};
  for (int i = 0; i < 3; ++i) {
    cells[i].ok = true;
    cells[i].summary = {means[i], means[i] - 0.1, means[i] + 0.1, 0.2};
  }
  const CellMetrics m = aggregate_cell(cells, 0.25);
  EXPECT_NEAR(m.bias, 0.05, 1e-15);
  EXPECT_NEAR(m.mse, (0.0225 + 0.0025 + 0.0625) / 3, 1e-15);
  EXPECT_NEAR(m.variance, 0.04, 1e-15);
  EXPECT_NEAR(m.coverage, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.mean_interval_width, 0.2, 1e-15);
}

void expect_same(const SimReport& a, const SimReport& b) {
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    EXPECT_EQ(std::memcmp(&a.cells[k].mse, &b.cells[k].mse, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&a.cells[k].coverage, &b.cells[k].coverage, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&a.cells[k].mean_interval_width, &b.cells[k].mean_interval_width, sizeof(double)), 0);
  }
  for (std::size_t r = 0; r < a.replicates.size(); ++r) {
    EXPECT_EQ(a.replicates[r].stream_id, b.replicates[r].stream_id);
    for (std::size_t k = 0; k < a.replicates[r].cells.size(); ++k) {
      for (std::size_t v = 0; v < 4; ++v) {
        EXPECT_EQ(a.replicates[r].cells[k][v].summary.mean, b.replicates[r].cells[k][v].summary.mean);
      }
    }
  }
}

TEST(RunStudy, DeterministicAcrossWorkerCounts) {
  const SimSetting s = SimSetting::make(3, 150);
  StudyConfig one = small_study(5);
  StudyConfig many = one;
  many.workers = 3;
  const SimReport a = run_study(s, one, RngStream(108, 0));
  const SimReport b = run_study(s, many, RngStream(108, 0));
  const SimReport c = run_study(s, one, RngStream(108, 0));
  expect_same(a, b);
  expect_same(a, c);
  EXPECT_EQ(a.cells.size(), 16u);
  EXPECT_EQ(a.cell(3, Method::kOracle).method, Method::kOracle);
  EXPECT_THROW(a.cell(4, Method::kOracle), BoundsError);
}

TEST(RunStudy, SingleReplicateFlagsVariance) {
  StudyConfig c = small_study(1);
  c.methods = {Method::kHierarchical};
  const SimReport r = run_study(SimSetting::make(1), c, RngStream(109, 0));
  ASSERT_EQ(r.replicates.size(), 1u);
  for (const auto& cell : r.cells) {
    EXPECT_EQ(cell.replicates, 1u);
    EXPECT_TRUE(std::isnan(cell.variance));
    EXPECT_FALSE(std::isnan(cell.mse));
  }
}

TEST(RunStudy, RegeneratesDatasetsWithEmptyStrata) {
  StudyConfig c = small_study(6);
  c.methods = {Method::kEmpirical};
  const SimReport r = run_study(SimSetting::make(1, 8, 2), c, RngStream(110, 0));
  EXPECT_GT(r.total_regenerations, 0u);
  for (const auto& rec : r.replicates) {
    ASSERT_TRUE(rec.failure.empty()) << rec.failure;
    for (std::size_t n_v : rec.stratum_sizes) EXPECT_GT(n_v, 0u);
  }
}

}  // namespace
}  // namespace hbb
