#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace hbb::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

// Every flag of both subcommands. JSON keys (config files, manifests) are the
// long flag names.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::string output_dir = ".";
  std::string format = "csv";
  std::size_t workers = 1;

  // simulate
  std::vector<int> settings{1};
  std::size_t replicates = 200;
  std::size_t subjects = 300;
  std::size_t oracle_atoms = 5000;
  std::size_t truth_draws = 1'000'000;
  bool per_replicate = false;
  bool export_widths = false;
  bool export_datasets = false;

  // shared by both
  std::vector<std::string> methods;
  double m_min = 100.0;
  double prior_sd = 3.0;
  std::size_t mcmc_draws = 2000;
  std::size_t mcmc_burnin = 2000;
  std::string kernel = "hmc";

  // analyze
  std::string input;
  std::string outcome;
  std::string treatment;
  std::string stratum;
  std::vector<std::string> confounders;
  std::string family = "logistic";
  std::string contrast = "difference";
  std::string structure = "shared";
  std::string draws_a1;
  std::string draws_a0;
  std::string draws_format = "csv";
  bool export_draws = false;
};

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_analyze(const RunConfig& config, std::ostream& out, std::ostream& err);

// Parses argv (flags, then --config file, then HBB_SEED) and dispatches.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hbb::cli
