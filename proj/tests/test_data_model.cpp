#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mmrkit/data_model.hpp"
#include "mmrkit/error.hpp"
#include "mmrkit/rng.hpp"
#include "support.hpp"

using namespace mmr;
namespace fs = std::filesystem;

namespace {

fs::path write_tmp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("mmrkit_test_" + name);
  std::ofstream(p) << body;
  return p;
}

std::string error_of(const fs::path& p) {
  try {
    load_grouped_csv(p);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("loads groups in order of first appearance") {
  const auto p = write_tmp("four.csv", "group,y,x1\nb,1,2\na,3,4\nb,5,6\na,7,8\n");
  const GroupedDataset d = load_grouped_csv(p);
  REQUIRE(d.K() == 2);
  CHECK(d.group(0).group_id == "b");
  CHECK(d.group(0).n() == 2);
  CHECK(d.group(1).n() == 2);
  CHECK(d.group(1).y[1] == 7.0);
  CHECK(d.group(1).X(1, 0) == 8.0);
  CHECK(d.total_n() == 4);
}

TEST_CASE("custom column names and covariate order") {
  const auto p = write_tmp("cols.csv", "z,site,out,w\n1,s1,0,2\n3,s1,1,4\n");
  CsvSchema s;
  s.group_column = "site";
  s.response_column = "out";
  s.covariate_columns = {"w", "z"};
  const GroupedDataset d = load_grouped_csv(p, s);
  CHECK(d.p() == 2);
  CHECK(d.group(0).X(1, 0) == 4.0);
  CHECK(d.group(0).X(1, 1) == 3.0);
}

TEST_CASE("parse errors name the row and column") {
  auto msg = error_of(write_tmp("bad.csv", "group,y,x1\na,1,2\na,oops,3\n"));
  CHECK(msg.find("row 2") != std::string::npos);
  CHECK(msg.find("'y'") != std::string::npos);
  msg = error_of(write_tmp("short.csv", "group,y,x1\na,1\n"));
  CHECK(msg.find("row 1") != std::string::npos);
  msg = error_of(write_tmp("nocol.csv", "grp,y,x1\na,1,2\n"));
  CHECK(msg.find("missing column 'group'") != std::string::npos);
  CHECK(!error_of(write_tmp("empty.csv", "")).empty());
  CHECK(!error_of(write_tmp("header_only.csv", "group,y,x1\n")).empty());
  CHECK(!error_of(write_tmp("partial.csv", "group,y,x1\na,1,2x\n")).empty());
  CHECK(!error_of(fs::temp_directory_path() / "mmrkit_test_does_not_exist.csv").empty());
}

TEST_CASE("write then load reproduces the data bit for bit") {
  Rng rng(31, {1});
  std::vector<GroupSample> gs;
  for (int k = 0; k < 3; ++k) {
    const Matrix X = test::gaussian_design(rng, 10 + k, 3);
    gs.push_back({"grp" + std::to_string(k), X, rng.normal_vector(10 + k) * 1e-3});
  }
  const GroupedDataset d(gs);
  const fs::path p = fs::temp_directory_path() / "mmrkit_test_roundtrip.csv";
  write_grouped_csv(p, d);
  const GroupedDataset e = load_grouped_csv(p);
  REQUIRE(e.K() == d.K());
  for (std::size_t k = 0; k < d.K(); ++k) {
    CHECK(e.group(k).group_id == d.group(k).group_id);
    CHECK(e.group(k).X == d.group(k).X);
    CHECK(e.group(k).y == d.group(k).y);
  }
}

TEST_CASE("dataset construction checks") {
  Matrix X = Matrix::Ones(2, 1);
  CHECK_THROWS_AS(GroupedDataset(std::vector<GroupSample>{}), DataError);
  CHECK_THROWS_AS(GroupedDataset({{"a", X, Vector::Ones(2)}, {"a", X, Vector::Ones(2)}}), DataError);
  CHECK_THROWS_AS(GroupedDataset({{"a", X, Vector::Ones(3)}}), DataError);
  CHECK_THROWS_AS(GroupedDataset({{"a", X, Vector::Ones(2)}, {"b", Matrix::Ones(2, 2), Vector::Ones(2)}}),
                  DataError);
  Matrix bad = X;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(GroupedDataset({{"a", bad, Vector::Ones(2)}}), DataError);
}

TEST_CASE("pooled, without and with") {
  Matrix X1(1, 1), X2(2, 1);
  X1 << 1;
  X2 << 2, 3;
  const GroupedDataset d({{"a", X1, Vector::Constant(1, 1.0)}, {"b", X2, Vector::Constant(2, 2.0)}});
  const GroupSample p = d.pooled();
  CHECK(p.group_id == "pooled");
  CHECK(p.n() == 3);
  CHECK(p.X(2, 0) == 3.0);
  CHECK(d.without(0).K() == 1);
  CHECK(d.without(0).group(0).group_id == "b");
  CHECK(d.with({"c", X1, Vector::Zero(1)}).K() == 3);
}

TEST_CASE("validation flags") {
  Rng rng(32, {2});
  const Matrix X = test::gaussian_design(rng, 20, 3);
  Matrix dup = X;
  dup.col(2) = dup.col(1);
  const Matrix few = test::gaussian_design(rng, 2, 3);
  const GroupedDataset d({{"ok", X, Vector::Zero(20)}, {"dup", dup, Vector::Zero(20)}, {"few", few, Vector::Zero(2)}});
  const ValidationReport r = validate(d);
  CHECK(!r.ok());
  CHECK(r.groups[0].flags.empty());
  CHECK(r.groups[0].rank == 3);
  CHECK(r.groups[1].flags == std::vector<std::string>{"rank_deficient"});
  CHECK(std::find(r.groups[2].flags.begin(), r.groups[2].flags.end(), "insufficient_samples") !=
        r.groups[2].flags.end());
  CHECK(validate(GroupedDataset({{"ok", X, Vector::Zero(20)}})).ok());
}
