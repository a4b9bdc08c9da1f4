#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmrkit/data_model.hpp"
#include "mmrkit/local_fit.hpp"
#include "mmrkit/numerics.hpp"

namespace mmr {

enum class Method { mmr, gdro, pooled, mmv };

Method parse_method(std::string_view name);
std::string_view method_name(Method m);

struct SolverOptions {
  /// Linearization constant; estimated from the data when unset.
  std::optional<double> L;
  int T_max = 5000;
  double gap_tol = 1e-8;
  /// Starting point; the pooled ERM solution when unset.
  std::optional<Vector> init;
  /// Keep every iterate theta^(t) in FitResult::iterates.
  bool record_iterates = false;
};

void validate_options(const SolverOptions& opts);

struct TraceEntry {
  int iteration = 0;
  double objective = 0.0;  // max_k f_k at the iterate before the step
  double gap = 0.0;
  double step_norm = 0.0;
  double L = 0.0;
};

struct FitResult {
  Method method = Method::mmr;
  LossSpec loss = LossSpec::square();
  Vector theta_hat;
  std::optional<Vector> gamma_hat;
  /// n_k / sum n for pooled ERM, the mixture it implicitly minimizes.
  std::optional<Vector> implicit_weights;
  Vector per_group_regret;
  /// mmr: max regret; gdro: max risk; pooled: pooled risk;
  /// mmv: min_k explained variance (the maximin value).
  double objective = 0.0;
  double gap = 0.0;
  bool converged = false;
  int iterations = 0;
  double L = 0.0;
  std::vector<TraceEntry> trace;
  std::vector<Vector> iterates;
};

FitResult fit_mmr(const GroupedDataset& data, const LossSpec& loss, const SolverOptions& opts = {});
FitResult fit_gdro(const GroupedDataset& data, const LossSpec& loss, const SolverOptions& opts = {});
FitResult fit_pooled(const GroupedDataset& data, const LossSpec& loss);
/// Square loss (or gaussian): max-min of n^-1 sum [y^2 - (y - x^T theta)^2].
/// logistic/poisson: the revised criterion Var(y) - n^-1 sum (y - A'(x^T theta))^2,
/// nonconvex; best of K + 2 deterministic starts {0, pooled, beta_hat_k}.
FitResult fit_mmv(const GroupedDataset& data, const LossSpec& loss, const SolverOptions& opts = {});

/// Variants that reuse precomputed local fits.
FitResult fit_mmr(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                  const LossSpec& loss, const SolverOptions& opts);
FitResult fit_gdro(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                   const LossSpec& loss, const SolverOptions& opts);
FitResult fit_mmv(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                  const LossSpec& loss, const SolverOptions& opts);

FitResult fit_method(Method m, const GroupedDataset& data, const LossSpec& loss,
                     const SolverOptions& opts = {});

/// Per-group empirical regrets of theta under `loss`.
Vector per_group_regrets(const Vector& theta, const std::vector<LocalFit>& fits,
                         const GroupedDataset& data, const LossSpec& loss);

double worst_empirical_regret(const Vector& theta, const std::vector<LocalFit>& fits,
                              const GroupedDataset& data, const LossSpec& loss);

/// Square loss: 2 max_k lambda_max(Sigma_k), exact and global.
/// GLM: 1.1 max_k lambda_max(H_k) over `center` and the 2p points
/// center +- radius e_j.
double estimate_lipschitz(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                          const LossSpec& loss, const Vector& center, double radius = 0.0);

}  // namespace mmr
