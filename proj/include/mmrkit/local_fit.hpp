#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmrkit/data_model.hpp"
#include "mmrkit/glm_family.hpp"
#include "mmrkit/numerics.hpp"

namespace mmr {

/// Loss selector: the square loss (y - x^T theta)^2 or the canonical GLM
/// negative log-likelihood A(x^T theta) - y x^T theta.
///
/// The two scales differ by a factor of two on Gaussian data: the square-loss
/// regret is |theta - beta|^2_Sigma, the gaussian-family regret is half that.
class LossSpec {
 public:
  static LossSpec square() { return LossSpec(std::nullopt); }
  static LossSpec glm(GlmFamily family) { return LossSpec(family); }
  /// "square" | "gaussian" | "logistic" | "poisson"
  static LossSpec parse(std::string_view name);

  bool is_square() const noexcept { return !family_.has_value(); }
  /// Throws InputError for the square loss.
  const GlmFamily& family() const;
  std::string name() const;

  friend bool operator==(const LossSpec&, const LossSpec&) = default;

 private:
  explicit LossSpec(std::optional<GlmFamily> f) : family_(f) {}
  std::optional<GlmFamily> family_;
};

/// Per-group summary from the within-group ERM.
struct LocalFit {
  std::string group_id;
  LossSpec loss = LossSpec::square();
  Vector beta_hat;
  SymMatrix sigma_mat;  // n^-1 sum x x^T
  Vector mu_hat;        // n^-1 sum x y
  double wmr = 0.0;     // minimized empirical risk under `loss`
  double wuv = 0.0;     // square-loss minimized risk
  double wev = 0.0;     // beta_ls^T Sigma beta_ls
  Eigen::Index n = 0;
};

struct RiskEval {
  double value = 0.0;
  Vector gradient;
  std::optional<Matrix> hessian;
};

/// Mean loss over the sample at theta by a full row pass (kernels::*).
RiskEval empirical_risk(const GroupSample& sample, const LossSpec& loss, const Vector& theta,
                        bool with_hessian = false);

/// Second-moment statistics n^-1 X^T X and n^-1 X^T y.
SymMatrix second_moment(const GroupSample& sample);
Vector cross_moment(const GroupSample& sample);

LocalFit least_squares(const GroupSample& sample);

struct NewtonOptions {
  double tol = 1e-9;
  int max_iter = 100;
  int max_halvings = 50;
};

/// Damped Newton for the GLM risk. Converged when the score
/// |n^-1 sum x (y - A'(x^T b))|_inf <= tol and the Newton step has shrunk.
///
/// Throws NonCompactError when the risk has no minimizer in practice: the
/// iterate norm passes 1e3 (1 + |init|) with the score above tol, or the
/// score vanishes while Newton steps stay O(1) (the curvature is vanishing
/// along an escape direction, the signature of separation).
LocalFit glm_newton(const GroupSample& sample, const GlmFamily& family, const Vector& init,
                    const NewtonOptions& opts = {});
LocalFit glm_newton(const GroupSample& sample, const GlmFamily& family);

struct RegretEval {
  double regret = 0.0;
  Vector gradient;
};

/// Empirical risk at theta minus fit.wmr, and the risk gradient. For the
/// square loss this is evaluated as |theta - beta_hat|^2_Sigma, which is the
/// same quantity without the cancellation of risk - wmr.
RegretEval empirical_regret(const Vector& theta, const LocalFit& fit, const GroupSample& sample,
                            const LossSpec& loss);

/// One LocalFit per group in dataset order.
std::vector<LocalFit> group_summaries(const GroupedDataset& data, const LossSpec& loss);

}  // namespace mmr
