#include "hbb/sim.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>

#include "hbb/errors.hpp"
#include "hbb/pipeline.hpp"

namespace hbb {
namespace {

inline double expit(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> alternating_signs(std::size_t p) {
  std::vector<double> out(p);
  for (std::size_t j = 0; j < p; ++j) out[j] = (j % 2 == 0) ? 1.0 : -1.0;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) total += a[j] * b[j];
  return total;
}

}  // namespace

SimSetting SimSetting::make(int id, std::size_t n, std::size_t p) {
  if (id < 1 || id > 4) {
    throw DomainError("simulation setting must be 1, 2, 3 or 4 (got " + std::to_string(id) + ")");
  }
  SimSetting s;
  s.id = id;
  s.n = n;
  s.p = p;
  s.beta = alternating_signs(p);
  s.theta = alternating_signs(p);
  s.validate();
  return s;
}

void SimSetting::validate() const {
  if (id < 1 || id > 4) throw DomainError("simulation setting must be 1..4");
  if (n < 1) throw DomainError("simulation needs n >= 1");
  if (p < 1) throw DomainError("simulation needs p >= 1");
  if (beta.size() != p || theta.size() != p) {
    throw DomainError("beta and theta must have p entries");
  }
  double total = 0.0;
  for (double q : stratum_probs) {
    if (q < 0.0) throw DomainError("stratum probabilities must be non-negative");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("stratum probabilities must sum to 1");
  for (double pr : bernoulli_probs) {
    if (pr < 0.0 || pr > 1.0) throw DomainError("Bernoulli probabilities must lie in [0, 1]");
  }
  for (double tau : gamma_tau) {
    if (!(tau > 0.0)) throw DomainError("gamma tau must be positive");
  }
}

std::string SimSetting::name() const {
  switch (id) {
    case 1: return "homogeneous-gaussian";
    case 2: return "gaussian-mixture";
    case 3: return "bernoulli-mixture";
    case 4: return "gamma-mixture";
  }
  return "unknown";
}

std::uint64_t SimSetting::fingerprint() const {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(id)) ^ mix64(p);
  auto add = [&h](double x) { h = mix64(h ^ std::bit_cast<std::uint64_t>(x)); };
  for (double x : theta) add(x);
  for (auto* arr : {&gamma, &alpha, &normal_means, &bernoulli_probs, &gamma_tau}) {
    for (double x : *arr) add(x);
  }
  return h;
}

void sample_confounders(const SimSetting& setting, std::size_t v, RngStream& rng,
                        std::span<double> out) {
  if (v >= kSimStrata) throw DomainError("simulation stratum must be 0..3");
  if (out.size() != setting.p) throw ValidationError("confounder buffer has the wrong size");
  switch (setting.id) {
    case 1:
      for (double& x : out) x = rng.normal();
      break;
    case 2:
      for (double& x : out) x = setting.normal_means[v] + rng.normal();
      break;
    case 3:
      for (double& x : out) x = rng.uniform() < setting.bernoulli_probs[v] ? 1.0 : 0.0;
      break;
    case 4:
      for (double& x : out) x = sample_gamma(0.5 * setting.gamma_tau[v], 0.5, rng);
      break;
    default:
      throw DomainError("simulation setting must be 1..4");
  }
}

Dataset simulate_dataset(const SimSetting& setting, RngStream& rng) {
  setting.validate();
  const std::size_t n = setting.n;
  const std::size_t p = setting.p;
  Dataset data;
  data.y.resize(n);
  data.a.resize(n);
  data.w.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<std::size_t> assignments(n);
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t v = sample_multinomial_index(setting.stratum_probs, rng);
    sample_confounders(setting, v, rng, row);
    const bool treated = rng.uniform() < expit(setting.eta[v] + dot(row, setting.beta));
    const double lp = -1.0 + setting.gamma[v] + dot(row, setting.theta) +
                      (treated ? setting.alpha[v] : 0.0);
    data.y[i] = rng.uniform() < expit(lp) ? 1.0 : 0.0;
    data.a[i] = treated ? 1 : 0;
    for (std::size_t j = 0; j < p; ++j) {
      data.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    assignments[i] = v;
  }
  data.strata = StrataIndex(std::move(assignments), kSimStrata);
  data.stratum_labels = {"1", "2", "3", "4"};
  for (std::size_t j = 0; j < p; ++j) data.confounder_names.push_back("w" + std::to_string(j + 1));
  return data;
}

OracleAtoms oracle_weights(const SimSetting& setting, std::size_t v, std::size_t n_mc,
                           RngStream& rng) {
  if (n_mc < 1) throw DomainError("oracle needs n_mc >= 1");
  if (v >= kSimStrata) throw DomainError("simulation stratum must be 0..3");
  setting.validate();
  OracleAtoms out;
  out.rows.resize(static_cast<Eigen::Index>(n_mc), static_cast<Eigen::Index>(setting.p));
  std::vector<double> row(setting.p);
  for (std::size_t k = 0; k < n_mc; ++k) {
    sample_confounders(setting, v, rng, row);
    for (std::size_t j = 0; j < setting.p; ++j) {
      out.rows(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  std::vector<std::size_t> ids(n_mc);
  for (std::size_t k = 0; k < n_mc; ++k) ids[k] = k;
  out.atoms = WeightedAtoms::trusted(std::move(ids), std::vector<double>(n_mc, 1.0 / static_cast<double>(n_mc)));
  return out;
}

OracleSource::OracleSource(const SimSetting& setting, std::size_t n_mc, const RngStream& rng) {
  for (std::size_t v = 0; v < kSimStrata; ++v) {
    RngStream stream = rng.child(v);
    strata_.push_back(oracle_weights(setting, v, n_mc, stream));
  }
}

const WeightedAtoms& OracleSource::stratum(std::size_t v) {
  if (v >= strata_.size()) throw BoundsError("oracle stratum out of range");
  return strata_[v].atoms;
}

const Eigen::MatrixXd* OracleSource::support(std::size_t v) const {
  if (v >= strata_.size()) return nullptr;
  return &strata_[v].rows;
}

namespace {

struct Welford {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  TruthEstimate estimate() const {
    const double var = count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(count)), count};
  }
};

void accumulate_truth(const SimSetting& setting, std::size_t v, std::size_t draws, RngStream& rng,
                      Welford& acc) {
  std::vector<double> row(setting.p);
  const double base = -1.0 + setting.gamma[v];
  for (std::size_t k = 0; k < draws; ++k) {
    sample_confounders(setting, v, rng, row);
    const double lp = base + dot(row, setting.theta);
    acc.add(expit(lp + setting.alpha[v]) - expit(lp));
  }
}

}  // namespace

TruthEstimate true_hte(const SimSetting& setting, std::size_t v, std::size_t n_mc,
                       RngStream& rng) {
  setting.validate();
  if (v >= kSimStrata) throw DomainError("simulation stratum must be 0..3");
  if (n_mc < 1) throw DomainError("true_hte needs n_mc >= 1");
  Welford acc;
  accumulate_truth(setting, v, n_mc, rng, acc);
  return acc.estimate();
}

TruthEstimate cached_true_hte(const SimSetting& setting, std::size_t v, std::size_t n_mc) {
  setting.validate();
  if (v >= kSimStrata) throw DomainError("simulation stratum must be 0..3");
  if (n_mc < 1) throw DomainError("true_hte needs n_mc >= 1");
  static std::mutex mutex;
  static std::map<std::tuple<std::uint64_t, std::size_t, std::size_t>, TruthEstimate> cache;
  const auto key = std::make_tuple(setting.fingerprint(), v, n_mc);
  std::lock_guard<std::mutex> lock(mutex);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  constexpr double kTargetSe = 1e-4;
  RngStream rng(0x7472757468ULL, mix64(setting.fingerprint() ^ mix64(v)));
  Welford acc;
  accumulate_truth(setting, v, n_mc, rng, acc);
  for (int extra = 1; extra < 16 && acc.estimate().mc_se >= kTargetSe; ++extra) {
    accumulate_truth(setting, v, n_mc, rng, acc);
  }
  const TruthEstimate est = acc.estimate();
  cache.emplace(key, est);
  return est;
}

void StudyConfig::validate() const {
  if (n_replicates < 1) throw ValidationError("study needs at least one replicate");
  if (methods.empty()) throw ValidationError("study needs at least one method");
  if (!(m_min > 0.0)) throw ValidationError("m_min must be positive");
  if (!(prior_sd > 0.0)) throw ValidationError("prior_sd must be positive");
  if (oracle_atoms < 1) throw ValidationError("oracle_atoms must be at least 1");
  if (truth_draws < 1) throw ValidationError("truth_draws must be at least 1");
  mcmc.validate();
}

const CellMetrics& SimReport::cell(std::size_t stratum, Method method) const {
  for (const auto& c : cells) {
    if (c.stratum == stratum && c.method == method) return c;
  }
  throw BoundsError("no report cell for stratum " + std::to_string(stratum) + " method " +
                    std::string(method_name(method)));
}

RngStream replicate_stream(const RngStream& base, int setting_id, std::size_t replicate,
                           std::size_t attempt) noexcept {
  constexpr std::uint64_t kMaxAttempts = 64;
  return base.child(static_cast<std::uint64_t>(setting_id))
      .child(static_cast<std::uint64_t>(replicate) * kMaxAttempts + attempt);
}

CellMetrics aggregate_cell(std::span<const ReplicateCell> cells, double truth) {
  CellMetrics out;
  out.truth = truth;
  double sum = 0.0, sq_err = 0.0, width = 0.0, covered = 0.0;
  std::size_t count = 0;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    ++count;
    const double pm = c.summary.mean;
    sum += pm;
    sq_err += (pm - truth) * (pm - truth);
    width += c.summary.width;
    covered += (c.summary.q025 <= truth && truth <= c.summary.q975) ? 1.0 : 0.0;
  }
  out.replicates = count;
  out.failures = cells.size() - count;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (count == 0) {
    out.mse = out.bias = out.abs_bias = out.variance = out.mean_interval_width = out.coverage = nan;
    return out;
  }
  const double r = static_cast<double>(count);
  const double mean = sum / r;
  double ss = 0.0;
  for (const auto& c : cells) {
    if (c.ok) ss += (c.summary.mean - mean) * (c.summary.mean - mean);
  }
  out.mse = sq_err / r;
  out.bias = mean - truth;
  out.abs_bias = std::abs(out.bias);
  out.variance = count > 1 ? ss / (r - 1.0) : nan;
  out.mean_interval_width = width / r;
  out.coverage = covered / r;
  return out;
}

namespace {

ReplicateRecord run_replicate(const SimSetting& setting, const StudyConfig& config,
                              const RngStream& base, std::size_t replicate) {
  constexpr std::size_t kMaxAttempts = 64;
  ReplicateRecord record;
  record.replicate = replicate;
  record.cells.assign(config.methods.size(), std::vector<ReplicateCell>(kSimStrata));

  Dataset data;
  RngStream stream;
  bool populated = false;
  for (std::size_t attempt = 0; attempt < kMaxAttempts && !populated; ++attempt) {
    stream = replicate_stream(base, setting.id, replicate, attempt);
    RngStream data_rng = stream.child(kDatasetStream);
    data = simulate_dataset(setting, data_rng);
    populated = true;
    for (std::size_t v = 0; v < kSimStrata; ++v) populated = populated && data.strata.size(v) > 0;
    if (!populated) ++record.regenerations;
  }
  record.stream_id = stream.stream_id();
  for (std::size_t v = 0; v < kSimStrata; ++v) record.stratum_sizes.push_back(data.strata.size(v));
  auto fail_all = [&](const std::string& why) {
    record.failure = why;
    for (auto& per_method : record.cells) {
      for (auto& c : per_method) c.failure = why;
    }
  };
  if (!populated) {
    fail_all("every attempt produced an empty stratum");
    return record;
  }

  AnalysisPlan plan;
  plan.glm.family = Family::kLogistic;
  plan.glm.structure = StratumStructure::kSharedSlopes;
  plan.glm.prior_sd = {config.prior_sd};
  plan.glm.mcmc = config.mcmc;
  plan.methods = config.methods;
  plan.hbb.m_min = config.m_min;
  plan.contrast = ContrastType::kDifference;

  std::unique_ptr<OracleSource> oracle;
  std::vector<ConfounderSource*> extras;
  if (std::find(config.methods.begin(), config.methods.end(), Method::kOracle) != config.methods.end()) {
    oracle = std::make_unique<OracleSource>(setting, config.oracle_atoms, stream.child(kOracleStream));
    extras.push_back(oracle.get());
  }

  try {
    const AnalysisResult result = analyze_dataset(data, plan, stream, extras);
    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      const auto it = std::find_if(result.posteriors.begin(), result.posteriors.end(),
                                   [&](const HtePosterior& h) { return h.method == config.methods[k]; });
      for (std::size_t v = 0; v < kSimStrata; ++v) {
        const StratumResult& sr = it->strata[v];
        ReplicateCell& cell = record.cells[k][v];
        cell.ok = sr.ok();
        cell.failure = sr.failure;
        if (cell.ok) cell.summary = sr.posterior.summary;
      }
    }
  } catch (const Error& e) {
    fail_all(e.what());
  }
  return record;
}

}  // namespace

SimReport run_study(const SimSetting& setting, const StudyConfig& config, const RngStream& rng) {
  setting.validate();
  config.validate();
  if (setting.stratum_probs.size() != kSimStrata) throw DomainError("setting needs four strata");

  SimReport report;
  report.setting = setting;
  report.config = config;
  report.seed = rng.seed();
  report.base_stream = rng.stream_id();
  for (std::size_t v = 0; v < kSimStrata; ++v) {
    report.truths.push_back(cached_true_hte(setting, v, config.truth_draws));
  }

  report.replicates.resize(config.n_replicates);
  const std::size_t workers = std::clamp<std::size_t>(config.workers, 1, config.n_replicates);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= config.n_replicates) return;
      try {
        report.replicates[r] = run_replicate(setting, config, rng, r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(config.n_replicates);
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (const auto& rec : report.replicates) report.total_regenerations += rec.regenerations;
  std::vector<ReplicateCell> column(config.n_replicates);
  for (std::size_t v = 0; v < kSimStrata; ++v) {
    for (std::size_t k = 0; k < config.methods.size(); ++k) {
      for (std::size_t r = 0; r < config.n_replicates; ++r) column[r] = report.replicates[r].cells[k][v];
      CellMetrics cell = aggregate_cell(column, report.truths[v].value);
      cell.stratum = v;
      cell.method = config.methods[k];
      cell.truth_se = report.truths[v].mc_se;
      report.cells.push_back(cell);
    }
  }
  return report;
}

}  // namespace hbb
