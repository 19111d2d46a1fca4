#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "hbb/errors.hpp"
#include "hbb/models.hpp"
#include "support/stat_oracles.hpp"

namespace hbb {
namespace {

using testing::expit;

Dataset make_data(std::vector<double> y, std::vector<int> a, Eigen::MatrixXd w,
                  std::vector<std::size_t> strata, std::size_t k) {
  Dataset d;
  d.y = std::move(y);
  d.a = std::move(a);
  d.w = std::move(w);
  d.strata = StrataIndex(std::move(strata), k);
  return d;
}

// One confounder, binary treatment, single stratum; logit P(Y=1) = b0 + b1 W + b2 A.
Dataset logistic_data(std::size_t n, const Eigen::Vector3d& truth, RngStream& rng) {
  std::vector<double> y(n);
  std::vector<int> a(n);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    w(r, 0) = rng.normal();
    a[i] = rng.uniform() < 0.5;
    y[i] = rng.uniform() < expit(truth[0] + truth[1] * w(r, 0) + truth[2] * a[i]);
  }
  return make_data(std::move(y), std::move(a), std::move(w), std::vector<std::size_t>(n, 0), 1);
}

GlmSpec stratified_spec(std::size_t draws = 1500, std::size_t burnin = 1000) {
  GlmSpec spec;
  spec.structure = StratumStructure::kFullyStratified;
  spec.mcmc.n_draws = draws;
  spec.mcmc.n_burnin = burnin;
  return spec;
}

// Newton-Raphson maximum likelihood for logistic regression, unpenalized.
Eigen::VectorXd logistic_mle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(x.cols());
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd p = (x * beta).unaryExpr([](double e) { return expit(e); });
    const Eigen::VectorXd wts = p.array() * (1.0 - p.array());
    const Eigen::MatrixXd h = x.transpose() * wts.asDiagonal() * x;
    const Eigen::VectorXd step = h.ldlt().solve(x.transpose() * (y - p));
    beta += step;
    if (step.norm() < 1e-12) break;
  }
  return beta;
}

// Batch-means Monte Carlo standard error of a chain mean.
double batch_mcse(const Eigen::VectorXd& chain) {
  const Eigen::Index b = static_cast<Eigen::Index>(std::sqrt(static_cast<double>(chain.size())));
  const Eigen::Index nb = chain.size() / b;
  std::vector<double> means(static_cast<std::size_t>(nb));
  for (Eigen::Index k = 0; k < nb; ++k) means[static_cast<std::size_t>(k)] = chain.segment(k * b, b).mean();
  return testing::sd_of(means) / std::sqrt(static_cast<double>(nb));
}

Eigen::VectorXd column_sd(const Eigen::MatrixXd& draws) {
  Eigen::VectorXd sd(draws.cols());
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    const Eigen::VectorXd c = draws.col(j).array() - draws.col(j).mean();
    sd[j] = std::sqrt(c.squaredNorm() / static_cast<double>(draws.rows() - 1));
  }
  return sd;
}

TEST(GlmLayout, ParameterCounts) {
  const GlmLayout shared(StratumStructure::kSharedSlopes, 4, 10);
  EXPECT_EQ(shared.num_params(), 1u + 8u + 10u);
  const GlmLayout strat(StratumStructure::kFullyStratified, 4, 10);
  EXPECT_EQ(strat.num_params(), 48u);
  const auto names = shared.parameter_names();
  EXPECT_EQ(names.front(), "intercept");
  EXPECT_EQ(names.back(), "treatment[3]");
  EXPECT_EQ(parse_structure("stratified"), StratumStructure::kFullyStratified);
  EXPECT_THROW(parse_structure("pooled"), ValidationError);
}

TEST(GlmLayout, LinearPredictorMatchesDesignRow) {
  RngStream rng(1, 1);
  for (auto structure : {StratumStructure::kSharedSlopes, StratumStructure::kFullyStratified}) {
    const GlmLayout layout(structure, 3, 4);
    Eigen::VectorXd beta(static_cast<Eigen::Index>(layout.num_params()));
    for (auto& b : beta) b = rng.normal();
    Eigen::MatrixXd rows(7, 4);
    for (auto& x : rows.reshaped()) x = rng.normal();
    for (std::size_t v = 0; v < 3; ++v) {
      for (int a = 0; a < 2; ++a) {
        Eigen::VectorXd batch;
        layout.linear_predictors(beta, rows, a, v, batch);
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
          std::vector<double> w(4);
          for (int j = 0; j < 4; ++j) w[j] = rows(i, j);
          Eigen::RowVectorXd design(beta.size());
          layout.design_row(w, a, v, design);
          const double scalar = layout.linear_predictor(beta, w, a, v);
          EXPECT_EQ(scalar, batch[i]);
          EXPECT_NEAR(scalar, design.dot(beta), 1e-12);
        }
      }
    }
  }
}

TEST(GlmLogPosterior, GradientMatchesFiniteDifferences) {
  RngStream rng(2, 1);
  const std::size_t n = 60;
  std::vector<double> yb(n), yc(n);
  std::vector<int> a(n);
  std::vector<std::size_t> s(n);
  Eigen::MatrixXd w(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) w(static_cast<Eigen::Index>(i), j) = rng.normal();
    a[i] = rng.uniform() < 0.5;
    s[i] = i % 3;
    yb[i] = rng.uniform() < 0.4;
    yc[i] = std::floor(5.0 * rng.uniform());
  }
  for (auto family : {Family::kLogistic, Family::kPoisson}) {
    for (auto structure : {StratumStructure::kSharedSlopes, StratumStructure::kFullyStratified}) {
      const Dataset d = make_data(family == Family::kLogistic ? yb : yc, a, w, s, 3);
      GlmSpec spec;
      spec.family = family;
      spec.structure = structure;
      const GlmLogPosterior post(d, spec);
      for (int point = 0; point < 5; ++point) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(post.dimension()));
        for (auto& v : x) v = 0.5 * rng.normal();
        Eigen::VectorXd g;
        post.evaluate(x, &g);
        for (Eigen::Index j = 0; j < x.size(); ++j) {
          const double h = 1e-5;
          Eigen::VectorXd xp = x, xm = x;
          xp[j] += h;
          xm[j] -= h;
          const double fd = (post.evaluate(xp, nullptr) - post.evaluate(xm, nullptr)) / (2 * h);
          EXPECT_NEAR(g[j], fd, 1e-5 * std::max(1.0, std::abs(fd)))
              << family_name(family) << " " << structure_name(structure) << " coord " << j;
        }
      }
    }
  }
}

TEST(FitGlm, LogisticRecoversTruthNearMle) {
  RngStream rng(3, 1);
  const Eigen::Vector3d truth(-1.0, 1.0, -0.5);
  const Dataset d = logistic_data(2000, truth, rng);
  const OutcomeDraws fit = fit_glm(d, stratified_spec(), RngStream(3, 2));
  const Eigen::MatrixXd& draws = fit.coefficients();
  const Eigen::VectorXd mean = draws.colwise().mean();
  const Eigen::VectorXd sd = column_sd(draws);
  const GlmLogPosterior post(d, stratified_spec());
  const Eigen::VectorXd mle = logistic_mle(post.design(), Eigen::Map<const Eigen::VectorXd>(d.y.data(), 2000));
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(mean[j], truth[j], 0.15) << "coef " << j;
    EXPECT_LT(std::abs(mean[j] - mle[j]), 2.0 * sd[j]) << "coef " << j;
  }
  EXPECT_EQ(fit.diagnostics().divergences, 0u);
}

TEST(FitGlm, PoissonInterceptOnly) {
  RngStream rng(4, 1);
  const std::size_t n = 1000;
  std::vector<double> y(n);
  for (auto& v : y) {
    // Knuth's multiplication method.
    const double limit = std::exp(-4.0);
    double prod = rng.uniform_open();
    int k = 0;
    while (prod > limit) {
      prod *= rng.uniform_open();
      ++k;
    }
    v = k;
  }
  Dataset d = make_data(y, std::vector<int>(n, 0), Eigen::MatrixXd(static_cast<Eigen::Index>(n), 0),
                        std::vector<std::size_t>(n, 0), 1);
  GlmSpec spec = stratified_spec();
  spec.family = Family::kPoisson;
  spec.prior_sd = {10.0};
  const OutcomeDraws fit = fit_glm(d, spec, RngStream(4, 2));
  double total = 0.0;
  for (Eigen::Index m = 0; m < fit.coefficients().rows(); ++m) total += std::exp(fit.coefficients()(m, 0));
  EXPECT_NEAR(total / static_cast<double>(fit.num_draws()), 4.0, 0.2);
}

TEST(FitGlm, SeparatedDataStaysFinite) {
  std::vector<double> y(10);
  Eigen::MatrixXd w(10, 1);
  for (int i = 0; i < 10; ++i) {
    w(i, 0) = i - 4.5;
    y[static_cast<std::size_t>(i)] = i >= 5;
  }
  const Dataset d = make_data(y, std::vector<int>(10, 0), w, std::vector<std::size_t>(10, 0), 1);
  const OutcomeDraws fit = fit_glm(d, stratified_spec(1000, 1000), RngStream(5, 1));
  EXPECT_TRUE(fit.coefficients().allFinite());
  EXPECT_EQ(fit.diagnostics().divergences, 0u);
  // The prior keeps the slope within a few prior SDs.
  EXPECT_LT(fit.coefficients().col(1).cwiseAbs().maxCoeff(), 20.0);
}

TEST(FitGlm, ChainsAgree) {
  RngStream rng(6, 1);
  const Dataset d = logistic_data(500, Eigen::Vector3d(0.3, -0.8, 0.6), rng);
  const OutcomeDraws a = fit_glm(d, stratified_spec(2000, 1000), RngStream(6, 2));
  const OutcomeDraws b = fit_glm(d, stratified_spec(2000, 1000), RngStream(6, 3));
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double se = std::hypot(batch_mcse(a.coefficients().col(j)), batch_mcse(b.coefficients().col(j)));
    EXPECT_LT(std::abs(a.coefficients().col(j).mean() - b.coefficients().col(j).mean()), 3.0 * se)
        << "coef " << j;
  }
}

TEST(FitGlm, RandomWalkKernelAgreesWithHmc) {
  RngStream rng(7, 1);
  const Dataset d = logistic_data(400, Eigen::Vector3d(-0.5, 0.7, 0.4), rng);
  GlmSpec rwm = stratified_spec(6000, 3000);
  rwm.mcmc.kernel = McmcKernel::kRandomWalk;
  const OutcomeDraws a = fit_glm(d, rwm, RngStream(7, 2));
  const OutcomeDraws b = fit_glm(d, stratified_spec(2000, 1000), RngStream(7, 3));
  EXPECT_GT(a.diagnostics().acceptance_rate, 0.1);
  EXPECT_LT(a.diagnostics().acceptance_rate, 0.5);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double se = std::hypot(batch_mcse(a.coefficients().col(j)), batch_mcse(b.coefficients().col(j)));
    EXPECT_LT(std::abs(a.coefficients().col(j).mean() - b.coefficients().col(j).mean()), 4.0 * se);
  }
}

TEST(FitGlm, Errors) {
  Eigen::MatrixXd w(3, 1);
  w << 1, 2, 3;
  const Dataset counts = make_data({0, 2, 1}, {0, 1, 0}, w, {0, 0, 0}, 1);
  EXPECT_THROW(fit_glm(counts, stratified_spec(), RngStream()), SpecificationError);
  Eigen::MatrixXd inf_w = w;
  inf_w(1, 0) = std::numeric_limits<double>::infinity();
  const Dataset bad = make_data({0, 1, 1}, {0, 1, 0}, inf_w, {0, 0, 0}, 1);
  EXPECT_THROW(fit_glm(bad, stratified_spec(), RngStream()), InitializationError);
  GlmSpec wrong_prior = stratified_spec();
  wrong_prior.prior_sd = {1.0, 2.0};
  const Dataset ok = make_data({0, 1, 1}, {0, 1, 0}, w, {0, 0, 0}, 1);
  EXPECT_THROW(fit_glm(ok, wrong_prior, RngStream()), Error);
}

TEST(PredictMean, Examples) {
  const GlmLayout layout(StratumStructure::kFullyStratified, 1, 2);
  const OutcomeDraws zero = OutcomeDraws::from_coefficients(Family::kLogistic, layout, Eigen::MatrixXd::Zero(2, 4));
  const std::vector<double> w{3.0, -7.0};
  EXPECT_EQ(predict_mean(zero, 1, 1, w, 0), 0.5);
  EXPECT_THROW(predict_mean(zero, 2, 1, w, 0), BoundsError);

  const GlmLayout intercept_only(StratumStructure::kFullyStratified, 1, 0);
  Eigen::MatrixXd coef(1, 2);
  coef << std::log(2.0), 0.0;
  const OutcomeDraws pois = OutcomeDraws::from_coefficients(Family::kPoisson, intercept_only, coef);
  EXPECT_DOUBLE_EQ(predict_mean(pois, 0, 0, {}, 0), 2.0);
}

TEST(PredictMean, RangeProperty) {
  RngStream rng(8, 1);
  const GlmLayout layout(StratumStructure::kSharedSlopes, 3, 4);
  for (int trial = 0; trial < 2000; ++trial) {
    Eigen::MatrixXd coef(1, static_cast<Eigen::Index>(layout.num_params()));
    for (auto& c : coef.reshaped()) c = 1.5 * rng.normal();
    std::vector<double> w(4);
    for (auto& x : w) x = 2.0 * rng.normal();
    const std::size_t v = trial % 3;
    const int a = trial % 2;
    const double eta = layout.linear_predictor(coef.row(0).transpose(), w, a, v);
    const auto logit = OutcomeDraws::from_coefficients(Family::kLogistic, layout, coef);
    const auto pois = OutcomeDraws::from_coefficients(Family::kPoisson, layout, coef);
    if (std::abs(eta) < 30.0) {
      const double p = predict_mean(logit, 0, a, w, v);
      ASSERT_GT(p, 0.0);
      ASSERT_LT(p, 1.0);
    }
    if (std::abs(eta) < 700.0) {
      ASSERT_GT(predict_mean(pois, 0, a, w, v), 0.0);
    }
  }
}

TEST(ExternalDraws, ShapeAndRange) {
  Eigen::MatrixXd a1 = Eigen::MatrixXd::Constant(5, 10, 0.4);
  Eigen::MatrixXd a0 = Eigen::MatrixXd::Constant(5, 10, 0.3);
  a1(2, 7) = 0.91;
  const OutcomeDraws ext = load_external_draws(a1, a0, Family::kLogistic);
  EXPECT_EQ(ext.num_draws(), 10u);
  EXPECT_EQ(ext.kind(), OutcomeDraws::Kind::kExternalPredictions);
  Eigen::MatrixXd w(5, 0);
  const Dataset d = make_data({0, 1, 0, 1, 0}, {0, 1, 0, 1, 0}, w, {0, 0, 1, 1, 1}, 2);
  EXPECT_EQ(ext.mean_for_subject(7, 1, 2, d, 1), 0.91);
  EXPECT_THROW(ext.mean_at(0, 1, std::vector<double>{}, 0), SpecificationError);
  EXPECT_THROW(ext.mean_for_subject(10, 1, 2, d, 1), BoundsError);

  Eigen::MatrixXd out_of_range = a1;
  out_of_range(0, 0) = 1.3;
  EXPECT_THROW(load_external_draws(out_of_range, a0, Family::kLogistic), ValidationError);
  EXPECT_NO_THROW(load_external_draws(out_of_range, a0, Family::kPoisson));
  EXPECT_THROW(load_external_draws(a1, Eigen::MatrixXd::Constant(5, 9, 0.3), Family::kLogistic),
               ValidationError);
  Eigen::MatrixXd negative = a0;
  negative(1, 1) = -0.1;
  EXPECT_THROW(load_external_draws(a1, negative, Family::kPoisson), ValidationError);
}

TEST(Mcmc, StandardGaussianTarget) {
  struct Gaussian final : LogDensity {
    std::size_t dimension() const noexcept override { return 4; }
    double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* g) const override {
      if (g) *g = -x;
      return -0.5 * x.squaredNorm();
    }
  } target;
  for (auto kernel : {McmcKernel::kHamiltonian, McmcKernel::kRandomWalk}) {
    McmcConfig cfg;
    cfg.kernel = kernel;
    cfg.n_draws = kernel == McmcKernel::kHamiltonian ? 4000 : 20000;
    cfg.n_burnin = 2000;
    RngStream rng(9, static_cast<std::uint64_t>(kernel));
    const McmcResult r = sample_posterior(target, Eigen::VectorXd::Constant(4, 3.0), cfg, rng);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const Eigen::VectorXd c = r.draws.col(j);
      EXPECT_LT(std::abs(c.mean()), 4.0 * batch_mcse(c)) << kernel_name(kernel);
      EXPECT_NEAR((c.array() - c.mean()).square().mean(), 1.0, 0.15) << kernel_name(kernel);
    }
  }
}

TEST(Mcmc, Validation) {
  McmcConfig cfg;
  cfg.n_draws = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(parse_kernel("rwm"), McmcKernel::kRandomWalk);
  EXPECT_THROW(parse_kernel("nuts"), ValidationError);
}

}  // namespace
}  // namespace hbb
