#pragma once

#include <string>
#include <string_view>

#include "mmrkit/numerics.hpp"

namespace mmr {

enum class FamilyTag { gaussian, logistic, poisson };

struct CumulantValues {
  double value;  // A(eta)
  double d1;     // A'(eta)
  double d2;     // A''(eta)
};

/// Canonical-link exponential family, identified by its cumulant A.
/// gaussian: eta^2/2, logistic: log(1 + e^eta), poisson: e^eta.
class GlmFamily {
 public:
  constexpr explicit GlmFamily(FamilyTag tag) noexcept : tag_(tag) {}

  static GlmFamily parse(std::string_view name);

  FamilyTag tag() const noexcept { return tag_; }
  std::string_view name() const noexcept;

  /// Throws InputError on non-finite eta.
  CumulantValues eval(double eta) const;

  // Unchecked fast paths for inner loops; eta must be finite.
  double value(double eta) const noexcept;
  double mean(double eta) const noexcept;
  double variance(double eta) const noexcept;
  double d3(double eta) const noexcept;

  friend bool operator==(const GlmFamily&, const GlmFamily&) = default;

 private:
  FamilyTag tag_;
};

inline CumulantValues family_eval(const GlmFamily& family, double eta) {
  return family.eval(eta);
}

struct LossEval {
  double value;
  Vector gradient;
};

/// A(x^T theta) - y x^T theta and its gradient x (A'(x^T theta) - y).
LossEval pointwise_loss(const GlmFamily& family, const Vector& theta, const Vector& x, double y);

/// (y - x^T theta)^2 and its gradient -2 x (y - x^T theta).
LossEval square_loss(const Vector& theta, const Vector& x, double y);

}  // namespace mmr
