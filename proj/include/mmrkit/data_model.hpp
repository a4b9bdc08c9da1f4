#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmrkit/numerics.hpp"

namespace mmr {

/// One group's sample. X is n x p (column-major, so each covariate column is
/// contiguous for the row kernels); y has length n.
struct GroupSample {
  std::string group_id;
  Matrix X;
  Vector y;

  Eigen::Index n() const noexcept { return X.rows(); }
  Eigen::Index p() const noexcept { return X.cols(); }
};

/// Throws DataError unless n >= 1, sizes agree and all entries are finite.
void check_group_sample(const GroupSample& g);

class GroupedDataset {
 public:
  GroupedDataset() = default;
  /// Validates every group and checks that ids are unique and p is shared.
  explicit GroupedDataset(std::vector<GroupSample> groups);

  const std::vector<GroupSample>& groups() const noexcept { return groups_; }
  const GroupSample& group(std::size_t k) const { return groups_.at(k); }
  std::size_t K() const noexcept { return groups_.size(); }
  Eigen::Index p() const noexcept { return p_; }
  Eigen::Index total_n() const noexcept;

  /// Groups concatenated in order, with the group id "pooled".
  GroupSample pooled() const;
  /// Copy without group k.
  GroupedDataset without(std::size_t k) const;
  /// Copy with one more group appended.
  GroupedDataset with(GroupSample extra) const;

 private:
  std::vector<GroupSample> groups_;
  Eigen::Index p_ = 0;
};

struct CsvSchema {
  std::string group_column = "group";
  std::string response_column = "y";
  /// Empty: every other column, in header order.
  std::vector<std::string> covariate_columns;
};

/// Streams a headed, comma-delimited file into groups ordered by first
/// appearance. Numeric cells must parse completely; failures name the data
/// row (1-based, header excluded) and column.
GroupedDataset load_grouped_csv(const std::filesystem::path& path,
                                const CsvSchema& schema = {});

/// Writes `group,y,x1,...,xp` with 17 significant digits.
void write_grouped_csv(const std::filesystem::path& path, const GroupedDataset& data);

struct GroupValidation {
  std::string group_id;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index rank = 0;
  std::vector<std::string> flags;  // "insufficient_samples", "rank_deficient"
};

struct ValidationReport {
  std::vector<GroupValidation> groups;
  bool ok() const noexcept;
};

ValidationReport validate(const GroupedDataset& data);

/// Numerical rank of X^T X (eigenvalues above 1e-10 of the largest, scaled by p).
Eigen::Index gram_rank(const Matrix& X);

}  // namespace mmr
