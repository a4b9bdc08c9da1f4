#pragma once

#include <memory>

#include "mmrkit/glm_family.hpp"
#include "mmrkit/numerics.hpp"

namespace mmr {

/// Expected cumulant A(theta) = E[ A(X^T theta) ] over a covariate law, the
/// distance-generating function of the GLM regret geometry.
class Cumulant {
 public:
  virtual ~Cumulant() = default;
  virtual Eigen::Index p() const = 0;
  virtual const GlmFamily& family() const = 0;
  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  virtual Matrix hessian(const Vector& theta) const = 0;
};

/// Empirical average over a fixed covariate sample X (n x p).
class EmpiricalCumulant final : public Cumulant {
 public:
  /// Throws DataError if X is empty or X^T X is rank deficient.
  EmpiricalCumulant(Matrix X, GlmFamily family);

  Eigen::Index p() const override { return X_.cols(); }
  const GlmFamily& family() const override { return family_; }
  const Matrix& covariates() const noexcept { return X_; }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix hessian(const Vector& theta) const override;

 private:
  Matrix X_;
  GlmFamily family_;
};

/// Closed-form design X ~ N(mean, I_p). Reduces every expectation to a
/// one-dimensional Gaussian integral over eta = mean^T theta + |theta| Z
/// (Stein's identity for the first and second moments), evaluated with a
/// trapezoid rule whose step shrinks with |theta|.
class GaussianDesignCumulant final : public Cumulant {
 public:
  GaussianDesignCumulant(Vector mean, GlmFamily family);

  Eigen::Index p() const override { return mean_.size(); }
  const GlmFamily& family() const override { return family_; }
  const Vector& mean() const noexcept { return mean_; }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;
  Matrix hessian(const Vector& theta) const override;

 private:
  struct Moments {
    double a0, a1, a2, a3, a4;  // E[A^(j)(eta)]
  };
  Moments moments(const Vector& theta, int order) const;

  Vector mean_;
  GlmFamily family_;
};

}  // namespace mmr
