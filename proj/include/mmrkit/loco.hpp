#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmrkit/data_model.hpp"
#include "mmrkit/robust_solvers.hpp"

namespace mmr {

/// Area under the ROC curve via the Mann-Whitney statistic with midranks for
/// ties. nullopt when y has a single class. Throws DataError unless y is 0/1.
std::optional<double> auroc(const Vector& score, const Vector& y);

/// Mean squared error of probabilities against 0/1 labels.
double brier(const Vector& prob, const Vector& y);

/// Standard error of the per-observation squared errors behind `brier`.
double brier_se(const Vector& prob, const Vector& y);

struct LocoOptions {
  std::vector<Method> methods{Method::pooled, Method::gdro, Method::mmv, Method::mmr};
  /// Fraction of the held-out group used to fit the within-population baseline.
  double split_ratio = 0.5;
  int replications = 1;
  std::uint64_t seed = 1;
  SolverOptions solver;
};

struct LocoCell {
  std::string held_out;
  int replication = 0;
  /// A Method name or "within".
  std::string method;
  std::optional<double> auroc;
  std::optional<double> brier;
  std::string error;
};

struct LocoSummary {
  std::string method;
  double mean_auroc = 0.0;
  double mean_brier = 0.0;
  int auroc_count = 0;
  int brier_count = 0;
};

struct LocoReport {
  std::vector<LocoCell> cells;
  std::vector<LocoSummary> summary;

  const LocoSummary* find(std::string_view method) const;
};

/// Leave-one-group-out evaluation for logistic models: each group is held
/// out in turn, the methods are trained on the rest, a within-population
/// logistic fit uses the held-out training split, and all are scored on the
/// held-out test split.
LocoReport loco_harness(const GroupedDataset& data, const LocoOptions& opts);

}  // namespace mmr
