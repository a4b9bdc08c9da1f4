#pragma once

#include <optional>
#include <vector>

#include "mmrkit/cumulant.hpp"
#include "mmrkit/local_fit.hpp"
#include "mmrkit/numerics.hpp"

namespace mmr {

enum class DualKind { mmr_lm, mmv_lm, mmr_glm };

DualKind parse_dual_kind(std::string_view name);
std::string_view dual_kind_name(DualKind k);

struct DualSolution {
  DualKind kind = DualKind::mmr_lm;
  Vector gamma_star;
  /// theta* for the linear duals, the conjugate center theta** for mmr-glm.
  Vector center;
  Vector theta_star;
  /// R* for the MMR duals, V* for mmv-lm.
  double radius_sq = 0.0;
  /// Groups on the boundary of the enclosing ball or half-space.
  std::vector<std::size_t> supporting_set;
  /// Groups with gamma_star_k > support_tol.
  std::vector<std::size_t> positive_weight_set;
  /// Enclosure slack per group; negative means the group lies outside.
  Vector slacks;
  int iterations = 0;
};

inline constexpr double kSupportRelTol = 1e-6;

/// Maximizes sum_k gamma_k |beta_k|^2_Sigma - |sum_k gamma_k beta_k|^2_Sigma
/// over the simplex. Throws NonPsdError unless Sigma is positive definite.
DualSolution mmr_dual_lm(const std::vector<Vector>& betas, const SymMatrix& sigma);

/// Minimizes |sum_k gamma_k beta_k|^2_Sigma over the simplex.
DualSolution mmv_dual_lm(const std::vector<Vector>& betas, const SymMatrix& sigma);

struct ConjugateValue {
  double value = 0.0;
  Vector gradient;  // argmax_theta theta^T mu - A(theta)
};

/// sup_theta theta^T mu - A(theta) by damped Newton. Throws DomainError when
/// mu is not in the interior of the range of grad A.
ConjugateValue conjugate_eval(const Cumulant& a, const Vector& mu,
                              const std::optional<Vector>& warm = std::nullopt);

/// D_A(theta0 || theta1) = A(theta1) - A(theta0) - <grad A(theta0), theta1 - theta0>.
double bregman_div(const Cumulant& a, const Vector& theta0, const Vector& theta1);

/// Maximizes sum_k gamma_k A*(mu_k) - A*(sum_k gamma_k mu_k) over the simplex
/// with sequential quadratic models solved exactly on the simplex.
DualSolution mmr_dual_glm(const std::vector<Vector>& mus, const Cumulant& a, double tol = 1e-13,
                          int max_iter = 500);

/// The shared Sigma of square-loss summaries; InputError if any two differ by
/// more than rel_tol in max-norm (the dual certificates need a common Sigma).
SymMatrix common_sigma(const std::vector<LocalFit>& fits, double rel_tol = 1e-10);

struct DegenerationReport {
  /// Group k* satisfying the GDRO condition, if any.
  std::optional<std::size_t> gdro_group;
  std::optional<std::size_t> mmv_group;
  bool mmr_homogeneous = false;
  /// Per candidate k*: sigma2_k* - max_{k != k*}(sigma2_k + Delta_{k,k*}); >= 0 means degenerate.
  Vector gdro_margin;
  /// Per candidate k*: min_{k != k*}(nu2_k - Delta_{k,k*}) - nu2_k*; >= 0 means degenerate.
  Vector mmv_margin;
  double max_pairwise_distance = 0.0;
};

DegenerationReport check_degeneration(const std::vector<LocalFit>& fits, double homog_tol = 1e-8);

}  // namespace mmr
