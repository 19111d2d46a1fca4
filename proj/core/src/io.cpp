#include "hbb/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "hbb/errors.hpp"

namespace hbb {

std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", x);
  return buf.data();
}

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan";
}

bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s == "Inf" || s == "inf") { out = HUGE_VAL; return true; }
  if (s == "-Inf" || s == "-inf") { out = -HUGE_VAL; return true; }
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::size_t column_index(const CsvTable& table, const std::string& name, std::string_view role) {
  if (name.empty()) throw DataError("no column given for " + std::string(role));
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) {
    throw DataError(std::string(role) + " column '" + name + "' not found in header");
  }
  if (std::count(table.header.begin(), table.header.end(), name) > 1) {
    throw DataError(std::string(role) + " column '" + name + "' appears more than once");
  }
  return static_cast<std::size_t>(it - table.header.begin());
}

std::string row_list(const std::vector<std::size_t>& rows) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(rows.size(), 20);
  for (std::size_t k = 0; k < shown; ++k) {
    if (k) out += ", ";
    out += std::to_string(rows[k]);
  }
  if (rows.size() > shown) out += ", ... (" + std::to_string(rows.size()) + " rows)";
  return out;
}

std::vector<double> numeric_column(const CsvTable& table, std::size_t col, const std::string& name) {
  std::vector<double> out(table.rows.size());
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string cell = trim(table.rows[i][col]);
    if (is_missing(cell)) {
      missing.push_back(i + 1);
      continue;
    }
    if (!parse_number(cell, out[i])) {
      throw DataError("column '" + name + "' row " + std::to_string(i + 1) + ": '" + cell +
                      "' is not a number");
    }
  }
  if (!missing.empty()) {
    throw DataError("column '" + name + "' has missing values in rows " + row_list(missing));
  }
  return out;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (trim(line).empty()) continue;
      for (auto& f : split_line(line, line_no)) table.header.push_back(trim(f));
      have_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    auto fields = split_line(line, line_no);
    if (fields.size() != table.header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError("CSV input is empty (header row required)");
  return table;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_csv(in);
}

Dataset dataset_from_table(const CsvTable& table, const ColumnRoles& roles) {
  if (table.rows.empty()) throw DataError("input has a header but no data rows");
  const std::size_t yc = column_index(table, roles.outcome, "outcome");
  const std::size_t ac = column_index(table, roles.treatment, "treatment");
  const std::size_t vc = column_index(table, roles.stratum, "stratum");
  std::vector<std::size_t> wc;
  for (const auto& name : roles.confounders) wc.push_back(column_index(table, name, "confounder"));
  const std::vector<std::size_t> role_cols{yc, ac, vc};
  for (std::size_t i = 0; i < role_cols.size(); ++i) {
    for (std::size_t j = i + 1; j < role_cols.size(); ++j) {
      if (role_cols[i] == role_cols[j]) {
        throw DataError("column '" + table.header[role_cols[i]] + "' is assigned two roles");
      }
    }
    if (std::find(wc.begin(), wc.end(), role_cols[i]) != wc.end()) {
      throw DataError("column '" + table.header[role_cols[i]] +
                      "' cannot be both a confounder and the outcome/treatment/stratum");
    }
  }

  const std::size_t n = table.rows.size();
  Dataset data;
  data.y = numeric_column(table, yc, roles.outcome);
  const std::vector<double> a = numeric_column(table, ac, roles.treatment);
  data.a.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != 0.0 && a[i] != 1.0) {
      throw DataError("treatment column '" + roles.treatment + "' row " + std::to_string(i + 1) +
                      " must be 0 or 1");
    }
    data.a[i] = a[i] == 1.0 ? 1 : 0;
  }
  data.w.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(wc.size()));
  for (std::size_t j = 0; j < wc.size(); ++j) {
    const auto col = numeric_column(table, wc[j], roles.confounders[j]);
    for (std::size_t i = 0; i < n; ++i) {
      data.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
  }
  data.confounder_names = roles.confounders;

  std::vector<std::string> labels(n);
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = trim(table.rows[i][vc]);
    if (is_missing(labels[i])) missing.push_back(i + 1);
  }
  if (!missing.empty()) {
    throw DataError("column '" + roles.stratum + "' has missing values in rows " + row_list(missing));
  }
  std::vector<std::string> levels = labels;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  bool numeric = true;
  std::unordered_map<std::string, double> as_number;
  for (const auto& l : levels) {
    double x;
    if (!parse_number(l, x)) {
      numeric = false;
      break;
    }
    as_number[l] = x;
  }
  if (numeric) {
    std::stable_sort(levels.begin(), levels.end(), [&](const std::string& l, const std::string& r) {
      return as_number[l] < as_number[r];
    });
  }
  std::unordered_map<std::string, std::size_t> level_index;
  for (std::size_t k = 0; k < levels.size(); ++k) level_index[levels[k]] = k;
  std::vector<std::size_t> assignments(n);
  for (std::size_t i = 0; i < n; ++i) assignments[i] = level_index.at(labels[i]);
  data.strata = StrataIndex(std::move(assignments), levels.size());
  data.stratum_labels = std::move(levels);
  data.validate();
  return data;
}

Dataset read_dataset_csv(const std::filesystem::path& path, const ColumnRoles& roles) {
  return dataset_from_table(read_csv_file(path), roles);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "y,a,v";
  for (std::size_t j = 0; j < data.num_confounders(); ++j) {
    out << ',' << (data.confounder_names.empty() ? "w" + std::to_string(j + 1) : data.confounder_names[j]);
  }
  out << '\n';
  for (std::size_t i = 0; i < data.num_subjects(); ++i) {
    const std::size_t v = data.strata.assignment(i);
    out << format_double(data.y[i]) << ',' << data.a[i] << ','
        << (data.stratum_labels.empty() ? std::to_string(v) : data.stratum_labels[v]);
    for (Eigen::Index j = 0; j < data.w.cols(); ++j) {
      out << ',' << format_double(data.w(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_draws_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, line_no);
    std::vector<double> row(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string cell = trim(fields[j]);
      if (!parse_number(cell, row[j])) {
        throw DataError(path.string() + " line " + std::to_string(line_no) + " column " +
                        std::to_string(j + 1) + ": '" + cell + "' is not a number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(rows.front().size()) + " columns, found " +
                      std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + " contains no draws");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return out;
}

void write_draws_csv(std::ostream& out, const Eigen::MatrixXd& draws) {
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      if (j) out << ',';
      out << format_double(draws(i, j));
    }
    out << '\n';
  }
}

namespace {

constexpr std::string_view kDrawMagic = "HBBDRAW1";

std::uint64_t load_le(const unsigned char* p) {
  std::uint64_t x = 0;
  for (int b = 7; b >= 0; --b) x = (x << 8) | p[b];
  return x;
}

void store_le(std::uint64_t x, unsigned char* p) {
  for (int b = 0; b < 8; ++b) p[b] = static_cast<unsigned char>(x >> (8 * b));
}

}  // namespace

Eigen::MatrixXd read_draws_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  std::array<unsigned char, 24> head{};
  if (!in.read(reinterpret_cast<char*>(head.data()), head.size())) {
    throw DataError(path.string() + ": truncated header");
  }
  if (std::string_view(reinterpret_cast<const char*>(head.data()), 8) != kDrawMagic) {
    throw DataError(path.string() + ": bad magic (expected HBBDRAW1)");
  }
  const std::uint64_t rows = load_le(head.data() + 8);
  const std::uint64_t cols = load_le(head.data() + 16);
  if (rows == 0 || cols == 0 || rows > (std::uint64_t{1} << 40) / cols) {
    throw DataError(path.string() + ": implausible shape " + std::to_string(rows) + " x " +
                    std::to_string(cols));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<unsigned char> body(rows * cols * 8);
  if (!in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()))) {
    throw DataError(path.string() + ": truncated body");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(path.string() + ": trailing bytes after " + std::to_string(rows * cols) + " values");
  }
  double* dst = out.data();
  for (std::size_t k = 0; k < rows * cols; ++k) dst[k] = std::bit_cast<double>(load_le(&body[8 * k]));
  return out;
}

void write_draws_binary(std::ostream& out, const Eigen::MatrixXd& draws) {
  std::array<unsigned char, 24> head{};
  std::copy(kDrawMagic.begin(), kDrawMagic.end(), head.begin());
  store_le(static_cast<std::uint64_t>(draws.rows()), head.data() + 8);
  store_le(static_cast<std::uint64_t>(draws.cols()), head.data() + 16);
  out.write(reinterpret_cast<const char*>(head.data()), head.size());
  std::array<unsigned char, 8> buf{};
  const double* src = draws.data();
  for (Eigen::Index k = 0; k < draws.size(); ++k) {
    store_le(std::bit_cast<std::uint64_t>(src[k]), buf.data());
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  }
}

namespace {

std::string stratum_label(std::size_t v) { return std::to_string(v + 1); }

nlohmann::json num(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

nlohmann::json summary_json(const PosteriorSummary& s) {
  return {{"mean", num(s.mean)}, {"q025", num(s.q025)}, {"q975", num(s.q975)}, {"width", num(s.width)}};
}

const std::string& label_of(const Dataset& data, std::size_t v, std::string& scratch) {
  if (v < data.stratum_labels.size()) return data.stratum_labels[v];
  scratch = std::to_string(v);
  return scratch;
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const SimReport> reports) {
  out << "setting,stratum,method,replicates,failures,truth,truth_se,mse,bias,abs_bias,variance,"
         "mean_interval_width,coverage\n";
  for (const auto& report : reports) {
    for (const auto& c : report.cells) {
      out << report.setting.id << ',' << stratum_label(c.stratum) << ',' << method_name(c.method)
          << ',' << c.replicates << ',' << c.failures << ',' << format_double(c.truth) << ','
          << format_double(c.truth_se) << ',' << format_double(c.mse) << ','
          << format_double(c.bias) << ',' << format_double(c.abs_bias) << ','
          << format_double(c.variance) << ',' << format_double(c.mean_interval_width) << ','
          << format_double(c.coverage) << '\n';
    }
  }
}

void write_report_json(std::ostream& out, std::span<const SimReport> reports, bool per_replicate) {
  nlohmann::json root = nlohmann::json::array();
  for (const auto& report : reports) {
    nlohmann::json j;
    j["setting"] = report.setting.id;
    j["setting_name"] = report.setting.name();
    j["n"] = report.setting.n;
    j["p"] = report.setting.p;
    j["seed"] = report.seed;
    j["replicates"] = report.config.n_replicates;
    j["regenerations"] = report.total_regenerations;
    nlohmann::json truths = nlohmann::json::array();
    for (std::size_t v = 0; v < report.truths.size(); ++v) {
      truths.push_back({{"stratum", stratum_label(v)},
                        {"value", report.truths[v].value},
                        {"mc_se", report.truths[v].mc_se},
                        {"n_mc", report.truths[v].n_mc}});
    }
    j["truth"] = std::move(truths);
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells) {
      cells.push_back({{"stratum", stratum_label(c.stratum)},
                       {"method", method_name(c.method)},
                       {"replicates", c.replicates},
                       {"failures", c.failures},
                       {"truth", num(c.truth)},
                       {"mse", num(c.mse)},
                       {"bias", num(c.bias)},
                       {"abs_bias", num(c.abs_bias)},
                       {"variance", num(c.variance)},
                       {"mean_interval_width", num(c.mean_interval_width)},
                       {"coverage", num(c.coverage)}});
    }
    j["cells"] = std::move(cells);
    if (per_replicate) {
      nlohmann::json reps = nlohmann::json::array();
      for (const auto& rec : report.replicates) {
        nlohmann::json r;
        r["replicate"] = rec.replicate;
        r["stream_id"] = rec.stream_id;
        r["regenerations"] = rec.regenerations;
        r["stratum_sizes"] = rec.stratum_sizes;
        if (!rec.failure.empty()) r["failure"] = rec.failure;
        nlohmann::json rc = nlohmann::json::array();
        for (std::size_t k = 0; k < rec.cells.size(); ++k) {
          for (std::size_t v = 0; v < rec.cells[k].size(); ++v) {
            const auto& cell = rec.cells[k][v];
            nlohmann::json e{{"stratum", stratum_label(v)},
                             {"method", method_name(report.config.methods[k])}};
            if (cell.ok) {
              e["summary"] = summary_json(cell.summary);
            } else {
              e["failure"] = cell.failure;
            }
            rc.push_back(std::move(e));
          }
        }
        r["cells"] = std::move(rc);
        reps.push_back(std::move(r));
      }
      j["per_replicate"] = std::move(reps);
    }
    root.push_back(std::move(j));
  }
  out << root.dump(2) << '\n';
}

void write_widths_csv(std::ostream& out, std::span<const SimReport> reports) {
  out << "setting,replicate,stratum,method,mean,q025,q975,width\n";
  for (const auto& report : reports) {
    for (const auto& rec : report.replicates) {
      for (std::size_t k = 0; k < rec.cells.size(); ++k) {
        for (std::size_t v = 0; v < rec.cells[k].size(); ++v) {
          const auto& cell = rec.cells[k][v];
          if (!cell.ok) continue;
          out << report.setting.id << ',' << rec.replicate << ',' << stratum_label(v) << ','
              << method_name(report.config.methods[k]) << ',' << format_double(cell.summary.mean)
              << ',' << format_double(cell.summary.q025) << ',' << format_double(cell.summary.q975)
              << ',' << format_double(cell.summary.width) << '\n';
        }
      }
    }
  }
}

void write_hte_csv(std::ostream& out, const Dataset& data, std::span<const HtePosterior> results) {
  out << "stratum,method,contrast,n_v,mean,q025,q975,width,status\n";
  std::string scratch;
  for (const auto& h : results) {
    for (const auto& s : h.strata) {
      out << label_of(data, s.stratum, scratch) << ',' << method_name(h.method) << ','
          << contrast_name(h.contrast) << ',' << data.strata.size(s.stratum) << ',';
      if (s.ok()) {
        const auto& sm = s.posterior.summary;
        out << format_double(sm.mean) << ',' << format_double(sm.q025) << ','
            << format_double(sm.q975) << ',' << format_double(sm.width) << ",ok\n";
      } else {
        std::string why = s.failure;
        std::replace(why.begin(), why.end(), '"', '\'');
        out << "NA,NA,NA,NA,\"" << why << "\"\n";
      }
    }
  }
}

void write_hte_json(std::ostream& out, const Dataset& data, std::span<const HtePosterior> results) {
  nlohmann::json root = nlohmann::json::array();
  std::string scratch;
  for (const auto& h : results) {
    for (const auto& s : h.strata) {
      nlohmann::json e{{"stratum", label_of(data, s.stratum, scratch)},
                       {"method", method_name(h.method)},
                       {"contrast", contrast_name(h.contrast)},
                       {"n_v", data.strata.size(s.stratum)}};
      if (s.ok()) {
        e["summary"] = summary_json(s.posterior.summary);
      } else {
        e["failure"] = s.failure;
      }
      root.push_back(std::move(e));
    }
  }
  out << root.dump(2) << '\n';
}

void write_hte_draws_csv(std::ostream& out, const Dataset& data,
                         std::span<const HtePosterior> results) {
  out << "method,stratum,draw,value\n";
  std::string scratch;
  for (const auto& h : results) {
    for (const auto& s : h.strata) {
      if (!s.ok()) continue;
      const std::string& label = label_of(data, s.stratum, scratch);
      for (std::size_t m = 0; m < s.posterior.draws.size(); ++m) {
        out << method_name(h.method) << ',' << label << ',' << m << ','
            << format_double(s.posterior.draws[m]) << '\n';
      }
    }
  }
}

}  // namespace hbb
