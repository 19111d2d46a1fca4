#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hbb/errors.hpp"
#include "hbb/io.hpp"
#include "hbb/sim.hpp"

namespace hbb {
namespace {

namespace fs = std::filesystem;

fs::path fixture(const std::string& name) { return fs::path(HBB_FIXTURE_DIR) / name; }

const ColumnRoles kRoles{"y", "a", "v", {"w1", "w2"}};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hbb_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Csv, ParsesQuotesAndBlankLines) {
  std::istringstream in("a,b,c\n1,\"x,y\",\"he said \"\"hi\"\"\"\n\n2,z,w\r\n");
  const CsvTable t = parse_csv(in);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "x,y");
  EXPECT_EQ(t.rows[0][2], "he said \"hi\"");
  EXPECT_EQ(t.rows[1][2], "w");
}

TEST(Dataset, ReadsValidFixture) {
  const Dataset d = read_dataset_csv(fixture("valid.csv"), kRoles);
  EXPECT_EQ(d.num_subjects(), 8u);
  EXPECT_EQ(d.num_confounders(), 2u);
  EXPECT_EQ(d.stratum_labels, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(d.strata.members(1), (std::vector<std::size_t>{2, 3, 5, 7}));
  EXPECT_EQ(d.w(3, 0), 0.9);
  EXPECT_EQ(d.a[0], 1);
}

TEST(Dataset, NumericLabelsSortNumerically) {
  std::istringstream in("y,a,v\n0,0,10\n1,1,2\n0,1,1\n");
  const Dataset d = dataset_from_table(parse_csv(in), {"y", "a", "v", {}});
  EXPECT_EQ(d.stratum_labels, (std::vector<std::string>{"1", "2", "10"}));
  EXPECT_EQ(d.strata.assignment(0), 2u);
}

struct Malformed {
  const char* file;
  const char* mentions;
};

TEST(Dataset, RejectsMalformedFixtures) {
  const Malformed cases[] = {
      {"missing_outcome.csv", "'y'"},          {"missing_confounder.csv", "rows 3, 6"},
      {"ragged_row.csv", "line 5"},            {"non_numeric_confounder.csv", "'w1'"},
      {"bad_treatment.csv", "'a'"},            {"header_only.csv", "no data rows"},
      {"empty.csv", "header"},                 {"unterminated_quote.csv", "quote"},
      {"duplicate_column.csv", "'w1'"},        {"missing_stratum.csv", "'v'"},
  };
  for (const auto& c : cases) {
    try {
      read_dataset_csv(fixture(c.file), kRoles);
      ADD_FAILURE() << c.file << " was accepted";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(c.mentions), std::string::npos) << c.file << ": " << e.what();
    }
  }
  EXPECT_THROW(read_dataset_csv(fixture("valid.csv"), {"y", "a", "v", {"w3"}}), DataError);
  EXPECT_THROW(read_dataset_csv(fixture("valid.csv"), {"y", "y", "v", {}}), DataError);
  EXPECT_THROW(read_dataset_csv(fixture("valid.csv"), {"y", "a", "v", {"a"}}), DataError);
  EXPECT_THROW(read_dataset_csv(fixture("no_such_file.csv"), kRoles), IoError);
}

TEST(Dataset, CsvRoundTripIsExact) {
  RngStream rng(1, 1);
  const Dataset d = simulate_dataset(SimSetting::make(4, 60), rng);
  std::stringstream buf;
  write_dataset_csv(buf, d);
  const ColumnRoles roles{"y", "a", "v", {"w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9", "w10"}};
  const Dataset back = dataset_from_table(parse_csv(buf), roles);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.a, d.a);
  EXPECT_EQ(back.w, d.w);
  EXPECT_EQ(back.strata.assignments(), d.strata.assignments());
}

TEST(Draws, CsvAndBinaryRoundTrip) {
  const fs::path dir = scratch("draws");
  Eigen::MatrixXd m(3, 4);
  m << 0.1, 1.0 / 3.0, 2.5e-300, 7,
       -0.0, 1e-17, 0.999999999999, 4,
       5, 6, 7, 8;
  {
    std::ofstream out(dir / "m.csv");
    write_draws_csv(out, m);
    std::ofstream bin(dir / "m.bin", std::ios::binary);
    write_draws_binary(bin, m);
  }
  EXPECT_EQ(read_draws_csv(dir / "m.csv"), m);
  EXPECT_EQ(read_draws_binary(dir / "m.bin"), m);
  EXPECT_EQ(fs::file_size(dir / "m.bin"), 24u + 8u * 12u);
  std::ifstream raw(dir / "m.bin", std::ios::binary);
  char magic[8];
  raw.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "HBBDRAW1");
}

TEST(Draws, RejectsMalformed) {
  const fs::path dir = scratch("draws_bad");
  EXPECT_THROW(read_draws_csv(fixture("toy3_ragged.csv")), DataError);
  {
    std::ofstream out(dir / "magic.bin", std::ios::binary);
    out << "HBBDRAW2" << std::string(16, '\0');
  }
  EXPECT_THROW(read_draws_binary(dir / "magic.bin"), DataError);
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(2, 2);
  {
    std::ofstream out(dir / "short.bin", std::ios::binary);
    write_draws_binary(out, m);
  }
  fs::resize_file(dir / "short.bin", 24 + 8 * 3);
  EXPECT_THROW(read_draws_binary(dir / "short.bin"), DataError);
  {
    std::ofstream out(dir / "long.bin", std::ios::binary);
    write_draws_binary(out, m);
    out << 'x';
  }
  EXPECT_THROW(read_draws_binary(dir / "long.bin"), DataError);
  EXPECT_THROW(read_draws_binary(dir / "absent.bin"), IoError);
}

TEST(Format, Doubles) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
  EXPECT_EQ(format_double(std::nan("")), "NA");
}

}  // namespace
}  // namespace hbb
