#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hbb/errors.hpp"
#include "hbb/io.hpp"
#include "hbb/pipeline.hpp"
#include "hbb/sim.hpp"

#ifndef HBB_VERSION
#define HBB_VERSION "unknown"
#endif

namespace hbb::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

json to_json(const RunConfig& c) {
  return json{{"command", c.command},
              {"seed", c.seed},
              {"stream-id", c.stream_id},
              {"output-dir", c.output_dir},
              {"format", c.format},
              {"workers", c.workers},
              {"setting", c.settings},
              {"replicates", c.replicates},
              {"subjects", c.subjects},
              {"oracle-atoms", c.oracle_atoms},
              {"truth-draws", c.truth_draws},
              {"per-replicate", c.per_replicate},
              {"export-widths", c.export_widths},
              {"export-datasets", c.export_datasets},
              {"methods", c.methods},
              {"m-min", c.m_min},
              {"prior-sd", c.prior_sd},
              {"mcmc-draws", c.mcmc_draws},
              {"mcmc-burnin", c.mcmc_burnin},
              {"kernel", c.kernel},
              {"input", c.input},
              {"outcome", c.outcome},
              {"treatment", c.treatment},
              {"stratum", c.stratum},
              {"confounders", c.confounders},
              {"family", c.family},
              {"contrast", c.contrast},
              {"structure", c.structure},
              {"draws-a1", c.draws_a1},
              {"draws-a0", c.draws_a0},
              {"draws-format", c.draws_format},
              {"export-draws", c.export_draws}};
}

template <class T>
void take(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config key '") + key + "' has the wrong type");
  }
}

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  const json known = to_json(RunConfig{});
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
  }
  take(j, "seed", c.seed);
  take(j, "stream-id", c.stream_id);
  take(j, "output-dir", c.output_dir);
  take(j, "format", c.format);
  take(j, "workers", c.workers);
  take(j, "setting", c.settings);
  take(j, "replicates", c.replicates);
  take(j, "subjects", c.subjects);
  take(j, "oracle-atoms", c.oracle_atoms);
  take(j, "truth-draws", c.truth_draws);
  take(j, "per-replicate", c.per_replicate);
  take(j, "export-widths", c.export_widths);
  take(j, "export-datasets", c.export_datasets);
  take(j, "methods", c.methods);
  take(j, "m-min", c.m_min);
  take(j, "prior-sd", c.prior_sd);
  take(j, "mcmc-draws", c.mcmc_draws);
  take(j, "mcmc-burnin", c.mcmc_burnin);
  take(j, "kernel", c.kernel);
  take(j, "input", c.input);
  take(j, "outcome", c.outcome);
  take(j, "treatment", c.treatment);
  take(j, "stratum", c.stratum);
  take(j, "confounders", c.confounders);
  take(j, "family", c.family);
  take(j, "contrast", c.contrast);
  take(j, "structure", c.structure);
  take(j, "draws-a1", c.draws_a1);
  take(j, "draws-a0", c.draws_a0);
  take(j, "draws-format", c.draws_format);
  take(j, "export-draws", c.export_draws);
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  // A manifest carries the effective configuration under "config".
  if (j.is_object() && j.contains("config") && j.at("config").is_object()) j = j.at("config");
  j.erase("command");
  return j;
}

std::vector<Method> resolve_methods(const RunConfig& c) {
  std::vector<Method> out;
  for (const auto& name : c.methods) {
    const Method m = parse_method(name);
    if (std::find(out.begin(), out.end(), m) != out.end()) {
      throw UsageError("--methods lists '" + name + "' twice");
    }
    out.push_back(m);
  }
  if (out.empty()) throw UsageError("--methods is empty");
  return out;
}

McmcConfig resolve_mcmc(const RunConfig& c) {
  McmcConfig m;
  m.n_draws = c.mcmc_draws;
  m.n_burnin = c.mcmc_burnin;
  m.kernel = parse_kernel(c.kernel);
  m.validate();
  return m;
}

void check_format(const RunConfig& c) {
  if (c.format != "csv" && c.format != "json") {
    throw UsageError("--format must be csv or json (got '" + c.format + "')");
  }
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::out | std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_manifest(const RunConfig& c, const fs::path& dir) {
  json cfg = to_json(c);
  cfg.erase("workers");
  cfg.erase("command");
  const json manifest{{"tool", "hbb"},
                      {"version", HBB_VERSION},
                      {"compiler", __VERSION__},
                      {"command", c.command},
                      {"seed", c.seed},
                      {"config", cfg}};
  auto out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest");
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kRuntimeError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ContrastError& e) {
    err << "contrast error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kUsageError;
  } catch (const SpecificationError& e) {
    err << "specification error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DomainError& e) {
    err << "invalid value: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace

int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    check_format(c);
    if (c.settings.empty()) throw UsageError("--setting needs at least one id");
    for (int id : c.settings) {
      if (id < 1 || id > 4) {
        throw UsageError("--setting " + std::to_string(id) + " is not a simulation setting (expected 1-4)");
      }
    }
    StudyConfig study;
    study.n_replicates = c.replicates;
    study.methods = resolve_methods(c);
    study.m_min = c.m_min;
    study.prior_sd = c.prior_sd;
    study.mcmc = resolve_mcmc(c);
    study.oracle_atoms = c.oracle_atoms;
    study.truth_draws = c.truth_draws;
    study.workers = std::max<std::size_t>(c.workers, 1);
    try {
      study.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    if (c.subjects < 1) throw UsageError("--subjects must be at least 1");

    const fs::path dir = c.output_dir;
    ensure_dir(dir);
    const RngStream base(c.seed, c.stream_id);
    std::vector<SimReport> reports;
    for (int id : c.settings) {
      const SimSetting setting = SimSetting::make(id, c.subjects);
      reports.push_back(run_study(setting, study, base));
      const SimReport& r = reports.back();
      out << "setting " << id << ": " << r.config.n_replicates << " replicates, "
          << r.total_regenerations << " regenerated datasets\n";
    }

    if (c.format == "csv") {
      const fs::path path = dir / "report.csv";
      auto f = open_out(path);
      write_report_csv(f, reports);
      finish(f, path);
      if (c.per_replicate) {
        const fs::path rp = dir / "replicates.json";
        auto g = open_out(rp);
        write_report_json(g, reports, true);
        finish(g, rp);
      }
    } else {
      const fs::path path = dir / "report.json";
      auto f = open_out(path);
      write_report_json(f, reports, c.per_replicate);
      finish(f, path);
    }
    if (c.export_widths) {
      const fs::path path = dir / "widths.csv";
      auto f = open_out(path);
      write_widths_csv(f, reports);
      finish(f, path);
    }
    if (c.export_datasets) {
      const fs::path ddir = dir / "datasets";
      ensure_dir(ddir);
      const fs::path index_path = ddir / "index.csv";
      auto index = open_out(index_path);
      index << "setting,replicate,seed,stream_id,file\n";
      for (const auto& r : reports) {
        for (const auto& rec : r.replicates) {
          const RngStream stream = replicate_stream(base, r.setting.id, rec.replicate, rec.regenerations);
          RngStream data_rng = stream.child(kDatasetStream);
          const Dataset data = simulate_dataset(r.setting, data_rng);
          const std::string name = "setting" + std::to_string(r.setting.id) + "_rep" +
                                   std::to_string(rec.replicate) + ".csv";
          const fs::path path = ddir / name;
          auto f = open_out(path);
          write_dataset_csv(f, data);
          finish(f, path);
          index << r.setting.id << ',' << rec.replicate << ',' << c.seed << ',' << stream.stream_id()
                << ',' << name << '\n';
        }
      }
      finish(index, index_path);
    }
    write_manifest(c, dir);
    return static_cast<int>(kOk);
  }, err);
}

int cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    check_format(c);
    if (c.input.empty()) throw UsageError("--input is required");
    if (c.outcome.empty()) throw UsageError("--outcome is required");
    if (c.treatment.empty()) throw UsageError("--treatment is required");
    if (c.stratum.empty()) throw UsageError("--stratum is required");
    const bool external = !c.draws_a1.empty() || !c.draws_a0.empty();
    if (external && (c.draws_a1.empty() || c.draws_a0.empty())) {
      throw UsageError("--draws-a1 and --draws-a0 must be given together");
    }
    if (c.draws_format != "csv" && c.draws_format != "binary") {
      throw UsageError("--draws-format must be csv or binary");
    }

    AnalysisPlan plan;
    plan.glm.family = parse_family(c.family);
    plan.glm.structure = parse_structure(c.structure);
    plan.glm.prior_sd = {c.prior_sd};
    plan.glm.mcmc = resolve_mcmc(c);
    plan.methods = resolve_methods(c);
    plan.hbb.m_min = c.m_min;
    plan.hbb.validate();
    plan.contrast = parse_contrast(c.contrast);
    for (Method m : plan.methods) {
      if (m == Method::kOracle) throw UsageError("the oracle method needs a known data-generating law; use simulate");
    }

    if (!fs::exists(c.input)) throw IoError("input file " + c.input + " does not exist");
    const Dataset data = read_dataset_csv(c.input, {c.outcome, c.treatment, c.stratum, c.confounders});
    const RngStream base(c.seed, c.stream_id);

    std::vector<HtePosterior> results;
    if (external) {
      auto read = [&](const std::string& p) {
        if (!fs::exists(p)) throw IoError("draws file " + p + " does not exist");
        return c.draws_format == "csv" ? read_draws_csv(p) : read_draws_binary(p);
      };
      Eigen::MatrixXd a1 = read(c.draws_a1);
      Eigen::MatrixXd a0 = read(c.draws_a0);
      if (static_cast<std::size_t>(a1.rows()) != data.num_subjects()) {
        throw DataError("--draws-a1 has " + std::to_string(a1.rows()) + " rows for " +
                        std::to_string(data.num_subjects()) + " subjects");
      }
      const OutcomeDraws draws = load_external_draws(std::move(a1), std::move(a0), plan.glm.family);
      results = analyze_with_draws(data, draws, plan, base);
    } else {
      AnalysisResult fit = analyze_dataset(data, plan, base);
      for (const auto& w : fit.outcome.warnings()) err << "warning: " << w << '\n';
      const auto& d = fit.outcome.diagnostics();
      if (d.divergences > 0) err << "warning: " << d.divergences << " divergent transitions\n";
      results = std::move(fit.posteriors);
    }

    const fs::path dir = c.output_dir;
    ensure_dir(dir);
    const fs::path path = dir / (c.format == "csv" ? "hte.csv" : "hte.json");
    {
      auto f = open_out(path);
      if (c.format == "csv") {
        write_hte_csv(f, data, results);
      } else {
        write_hte_json(f, data, results);
      }
      finish(f, path);
    }
    if (c.export_draws) {
      const fs::path dp = dir / "hte_draws.csv";
      auto f = open_out(dp);
      write_hte_draws_csv(f, data, results);
      finish(f, dp);
    }
    write_manifest(c, dir);

    int code = kOk;
    for (const auto& h : results) {
      for (const auto& s : h.strata) {
        const std::string& label = data.stratum_labels[s.stratum];
        if (s.ok()) {
          const auto& sm = s.posterior.summary;
          out << method_name(h.method) << " stratum " << label << ": " << format_double(sm.mean)
              << " [" << format_double(sm.q025) << ", " << format_double(sm.q975) << "]\n";
        } else {
          err << "error: stratum " << label << " (" << method_name(h.method) << "): " << s.failure << '\n';
          code = kUsageError;
        }
      }
    }
    return code;
  }, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical Bayesian bootstrap for stratum-specific treatment effects", "hbb"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HBB_VERSION);

  RunConfig flags;
  std::string config_path;
  std::vector<std::pair<CLI::Option*, std::string>> keyed;
  auto bind = [&keyed](CLI::App* sub, const std::string& name, auto& field, const std::string& help) {
    CLI::Option* opt = sub->add_option(name, field, help);
    keyed.emplace_back(opt, name.substr(2));
    return opt;
  };
  auto bind_flag = [&keyed](CLI::App* sub, const std::string& name, bool& field, const std::string& help) {
    CLI::Option* opt = sub->add_flag(name, field, help);
    keyed.emplace_back(opt, name.substr(2));
    return opt;
  };
  auto common = [&](CLI::App* sub) {
    bind(sub, "--seed", flags.seed, "Base seed (falls back to HBB_SEED, then 0)");
    bind(sub, "--stream-id", flags.stream_id, "Base stream id");
    bind(sub, "--output-dir", flags.output_dir, "Directory for output files");
    bind(sub, "--format", flags.format, "csv or json");
    bind(sub, "--m-min", flags.m_min, "Minimum effective stratum size M");
    bind(sub, "--prior-sd", flags.prior_sd, "Prior standard deviation of GLM coefficients");
    bind(sub, "--mcmc-draws", flags.mcmc_draws, "Retained MCMC draws");
    bind(sub, "--mcmc-burnin", flags.mcmc_burnin, "MCMC warm-up iterations");
    bind(sub, "--kernel", flags.kernel, "MCMC kernel: hmc or rwm");
    sub->add_option("--config", config_path, "JSON config or manifest; flags override it");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Run the simulation study");
  common(sim);
  bind(sim, "--setting", flags.settings, "Setting id(s), 1-4")->delimiter(',');
  bind(sim, "--replicates", flags.replicates, "Replicates per setting");
  bind(sim, "--methods", flags.methods, "empirical,bb,hbb,oracle")->delimiter(',');
  bind(sim, "--subjects", flags.subjects, "Subjects per dataset");
  bind(sim, "--oracle-atoms", flags.oracle_atoms, "Monte Carlo atoms per stratum for the oracle");
  bind(sim, "--truth-draws", flags.truth_draws, "Monte Carlo draws for the true effects");
  bind(sim, "--workers", flags.workers, "Worker threads");
  bind_flag(sim, "--per-replicate", flags.per_replicate, "Include per-replicate summaries");
  bind_flag(sim, "--export-widths", flags.export_widths, "Write widths.csv");
  bind_flag(sim, "--export-datasets", flags.export_datasets, "Write every replicate dataset");

  CLI::App* ana = app.add_subcommand("analyze", "Estimate stratum effects for a CSV dataset");
  common(ana);
  bind(ana, "--input", flags.input, "Input CSV with a header row");
  bind(ana, "--outcome", flags.outcome, "Outcome column");
  bind(ana, "--treatment", flags.treatment, "Treatment column (0/1)");
  bind(ana, "--stratum", flags.stratum, "Stratum column");
  bind(ana, "--confounders", flags.confounders, "Numeric confounder columns")->delimiter(',');
  bind(ana, "--family", flags.family, "logistic or poisson");
  bind(ana, "--contrast", flags.contrast, "difference, risk_ratio or odds_ratio");
  CLI::Option* method_opt = ana->add_option("--method,--methods", flags.methods, "empirical,bb,hbb")->delimiter(',');
  keyed.emplace_back(method_opt, "methods");
  bind(ana, "--structure", flags.structure, "shared or stratified GLM");
  bind(ana, "--draws-a1", flags.draws_a1, "External predictions under treatment (n x M)");
  bind(ana, "--draws-a0", flags.draws_a0, "External predictions under control (n x M)");
  bind(ana, "--draws-format", flags.draws_format, "csv or binary");
  bind_flag(ana, "--export-draws", flags.export_draws, "Write per-draw contrasts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << HBB_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  CLI::App* chosen = sim->parsed() ? sim : ana;
  return guarded([&] {
    json merged = to_json(RunConfig{});
    if (!config_path.empty()) merged.update(load_config_file(config_path));
    const json given = to_json(flags);
    for (const auto& [opt, key] : keyed) {
      if (opt->count() > 0) merged[key] = given.at(key);
    }
    bool seed_given = !config_path.empty() && load_config_file(config_path).contains("seed");
    for (const auto& [opt, key] : keyed) seed_given = seed_given || (key == "seed" && opt->count() > 0);
    if (!seed_given) {
      if (const char* env = std::getenv("HBB_SEED"); env && *env) {
        try {
          std::size_t pos = 0;
          merged["seed"] = std::stoull(env, &pos);
          if (env[pos] != '\0') throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw UsageError(std::string("HBB_SEED='") + env + "' is not an unsigned integer");
        }
      }
    }
    RunConfig c;
    from_json(merged, c);
    c.command = chosen->get_name();
    if (c.methods.empty()) {
      c.methods = c.command == "simulate" ? std::vector<std::string>{"empirical", "bb", "hbb", "oracle"}
                                          : std::vector<std::string>{"hbb"};
    }
    return c.command == "simulate" ? cmd_simulate(c, out, err) : cmd_analyze(c, out, err);
  }, err);
}

}  // namespace hbb::cli
