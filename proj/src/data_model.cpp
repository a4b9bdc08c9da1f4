#include "mmrkit/data_model.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "mmrkit/error.hpp"

namespace mmr {

void check_group_sample(const GroupSample& g) {
  if (g.X.rows() < 1) throw DataError("group '" + g.group_id + "' has no rows");
  if (g.y.size() != g.X.rows())
    throw DataError("group '" + g.group_id + "': X and y row counts differ");
  if (g.X.cols() < 1) throw DataError("group '" + g.group_id + "' has no covariates");
  if (!g.X.allFinite() || !g.y.allFinite())
    throw DataError("group '" + g.group_id + "' contains non-finite values");
}

GroupedDataset::GroupedDataset(std::vector<GroupSample> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw DataError("dataset has no groups");
  p_ = groups_.front().p();
  std::unordered_set<std::string> seen;
  for (const GroupSample& g : groups_) {
    check_group_sample(g);
    if (g.p() != p_) throw DataError("group '" + g.group_id + "' has a different covariate width");
    if (!seen.insert(g.group_id).second)
      throw DataError("duplicate group id '" + g.group_id + "'");
  }
}

Eigen::Index GroupedDataset::total_n() const noexcept {
  Eigen::Index n = 0;
  for (const GroupSample& g : groups_) n += g.n();
  return n;
}

GroupSample GroupedDataset::pooled() const {
  GroupSample out;
  out.group_id = "pooled";
  out.X.resize(total_n(), p_);
  out.y.resize(total_n());
  Eigen::Index row = 0;
  for (const GroupSample& g : groups_) {
    out.X.middleRows(row, g.n()) = g.X;
    out.y.segment(row, g.n()) = g.y;
    row += g.n();
  }
  return out;
}

GroupedDataset GroupedDataset::without(std::size_t k) const {
  std::vector<GroupSample> rest;
  for (std::size_t j = 0; j < groups_.size(); ++j)
    if (j != k) rest.push_back(groups_[j]);
  return GroupedDataset(std::move(rest));
}

GroupedDataset GroupedDataset::with(GroupSample extra) const {
  std::vector<GroupSample> all = groups_;
  all.push_back(std::move(extra));
  return GroupedDataset(std::move(all));
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

struct GroupBuffer {
  std::vector<double> rows;  // row-major
  std::vector<double> y;
};

}  // namespace

GroupedDataset load_grouped_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("data file '" + path.string() + "' is empty");
  std::vector<std::string_view> fields;
  split_fields(line, fields);
  std::vector<std::string> header(fields.begin(), fields.end());

  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError("missing column '" + name + "' in '" + path.string() + "'");
  };
  const std::size_t gcol = find_col(schema.group_column);
  const std::size_t ycol = find_col(schema.response_column);
  std::vector<std::size_t> xcols;
  if (schema.covariate_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != gcol && i != ycol) xcols.push_back(i);
  } else {
    for (const std::string& c : schema.covariate_columns) xcols.push_back(find_col(c));
  }
  if (xcols.empty()) throw DataError("no covariate columns in '" + path.string() + "'");
  const std::size_t p = xcols.size();

  std::vector<std::string> order;
  std::unordered_map<std::string, GroupBuffer> buffers;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    split_fields(line, fields);
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    std::string gid(fields[gcol]);
    auto [it, inserted] = buffers.try_emplace(gid);
    if (inserted) order.push_back(gid);
    GroupBuffer& buf = it->second;
    double v = 0.0;
    if (!parse_double(fields[ycol], v))
      throw DataError("row " + std::to_string(row) + ", column '" + header[ycol] +
                      "': non-numeric value '" + std::string(fields[ycol]) + "'");
    buf.y.push_back(v);
    for (std::size_t j : xcols) {
      if (!parse_double(fields[j], v))
        throw DataError("row " + std::to_string(row) + ", column '" + header[j] +
                        "': non-numeric value '" + std::string(fields[j]) + "'");
      buf.rows.push_back(v);
    }
  }
  if (order.empty()) throw DataError("data file '" + path.string() + "' has no data rows");

  std::vector<GroupSample> groups;
  groups.reserve(order.size());
  for (const std::string& gid : order) {
    GroupBuffer& buf = buffers.at(gid);
    const Eigen::Index n = static_cast<Eigen::Index>(buf.y.size());
    GroupSample g;
    g.group_id = gid;
    g.X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        buf.rows.data(), n, static_cast<Eigen::Index>(p));
    g.y = Eigen::Map<const Vector>(buf.y.data(), n);
    groups.push_back(std::move(g));
    buf = GroupBuffer{};
  }
  return GroupedDataset(std::move(groups));
}

void write_grouped_csv(const std::filesystem::path& path, const GroupedDataset& data) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  std::fputs("group,y", f);
  for (Eigen::Index j = 0; j < data.p(); ++j) std::fprintf(f, ",x%ld", static_cast<long>(j + 1));
  std::fputc('\n', f);
  for (const GroupSample& g : data.groups()) {
    for (Eigen::Index i = 0; i < g.n(); ++i) {
      std::fprintf(f, "%s,%.17g", g.group_id.c_str(), g.y[i]);
      for (Eigen::Index j = 0; j < g.p(); ++j) std::fprintf(f, ",%.17g", g.X(i, j));
      std::fputc('\n', f);
    }
  }
  if (std::fclose(f) != 0) throw DataError("failed to finish writing '" + path.string() + "'");
}

Eigen::Index gram_rank(const Matrix& X) {
  const Matrix gram = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  const double top = ev.size() ? ev.maxCoeff() : 0.0;
  if (top <= 0.0) return 0;
  const double thresh = 1e-10 * top * static_cast<double>(std::max<Eigen::Index>(1, X.cols()));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > thresh) ++r;
  return r;
}

bool ValidationReport::ok() const noexcept {
  for (const GroupValidation& g : groups)
    if (!g.flags.empty()) return false;
  return true;
}

ValidationReport validate(const GroupedDataset& data) {
  ValidationReport report;
  for (const GroupSample& g : data.groups()) {
    GroupValidation v;
    v.group_id = g.group_id;
    v.n = g.n();
    v.p = g.p();
    v.rank = gram_rank(g.X);
    if (v.n < v.p) v.flags.emplace_back("insufficient_samples");
    if (v.rank < v.p) v.flags.emplace_back("rank_deficient");
    report.groups.push_back(std::move(v));
  }
  return report;
}

}  // namespace mmr
