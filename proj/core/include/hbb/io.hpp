#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hbb/dataset.hpp"
#include "hbb/estimands.hpp"
#include "hbb/sim.hpp"

namespace hbb {

// Shortest round-trippable text for a double ("%.17g"); NaN prints as "NA".
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Comma-separated with optional double quotes. The first line is the header;
// every row must have as many fields as the header (DataError otherwise).
CsvTable parse_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

struct ColumnRoles {
  std::string outcome;
  std::string treatment;
  std::string stratum;
  std::vector<std::string> confounders;
};

// Builds a dataset from the named columns. Empty, "NA" and "NaN" cells in
// used columns are missing and rejected with a DataError listing the rows
// (1-based data rows). Stratum labels are ordered numerically when every
// label is a number, lexically otherwise.
Dataset dataset_from_table(const CsvTable& table, const ColumnRoles& roles);
Dataset read_dataset_csv(const std::filesystem::path& path, const ColumnRoles& roles);

// Columns y, a, v, then the confounder names (w1..wp when unnamed).
void write_dataset_csv(std::ostream& out, const Dataset& data);

// Prediction draws, n rows x M columns.
Eigen::MatrixXd read_draws_csv(const std::filesystem::path& path);
void write_draws_csv(std::ostream& out, const Eigen::MatrixXd& draws);
// "HBBDRAW1", uint64 rows, uint64 cols, then rows*cols float64 column-major,
// all little-endian.
Eigen::MatrixXd read_draws_binary(const std::filesystem::path& path);
void write_draws_binary(std::ostream& out, const Eigen::MatrixXd& draws);

// One row per setting x stratum x method.
void write_report_csv(std::ostream& out, std::span<const SimReport> reports);
void write_report_json(std::ostream& out, std::span<const SimReport> reports, bool per_replicate);
// Per-replicate interval summaries, long format.
void write_widths_csv(std::ostream& out, std::span<const SimReport> reports);

// Per stratum and method: label, n_v, mean, q025, q975, width, status.
void write_hte_csv(std::ostream& out, const Dataset& data, std::span<const HtePosterior> results);
void write_hte_json(std::ostream& out, const Dataset& data, std::span<const HtePosterior> results);
// Long format: method, stratum, draw, value.
void write_hte_draws_csv(std::ostream& out, const Dataset& data,
                         std::span<const HtePosterior> results);

}  // namespace hbb
