#include "mmrkit/glm_family.hpp"

#include <algorithm>
#include <cmath>

#include "mmrkit/error.hpp"

namespace mmr {

GlmFamily GlmFamily::parse(std::string_view name) {
  if (name == "gaussian") return GlmFamily(FamilyTag::gaussian);
  if (name == "logistic") return GlmFamily(FamilyTag::logistic);
  if (name == "poisson") return GlmFamily(FamilyTag::poisson);
  throw InputError("unknown GLM family '" + std::string(name) + "'");
}

std::string_view GlmFamily::name() const noexcept {
  switch (tag_) {
    case FamilyTag::gaussian: return "gaussian";
    case FamilyTag::logistic: return "logistic";
    case FamilyTag::poisson: return "poisson";
  }
  return "unknown";
}

namespace {

double sigmoid(double eta) noexcept {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

double GlmFamily::value(double eta) const noexcept {
  switch (tag_) {
    case FamilyTag::gaussian: return 0.5 * eta * eta;
    case FamilyTag::logistic: return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta)));
    case FamilyTag::poisson: return std::exp(eta);
  }
  return 0.0;
}

double GlmFamily::mean(double eta) const noexcept {
  switch (tag_) {
    case FamilyTag::gaussian: return eta;
    case FamilyTag::logistic: return sigmoid(eta);
    case FamilyTag::poisson: return std::exp(eta);
  }
  return 0.0;
}

double GlmFamily::variance(double eta) const noexcept {
  switch (tag_) {
    case FamilyTag::gaussian: return 1.0;
    case FamilyTag::logistic: {
      const double s = sigmoid(eta);
      return s * (1.0 - s);
    }
    case FamilyTag::poisson: return std::exp(eta);
  }
  return 0.0;
}

double GlmFamily::d3(double eta) const noexcept {
  switch (tag_) {
    case FamilyTag::gaussian: return 0.0;
    case FamilyTag::logistic: {
      const double s = sigmoid(eta);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    case FamilyTag::poisson: return std::exp(eta);
  }
  return 0.0;
}

CumulantValues GlmFamily::eval(double eta) const {
  if (!std::isfinite(eta)) throw InputError("GlmFamily::eval: non-finite eta");
  return {value(eta), mean(eta), variance(eta)};
}

LossEval pointwise_loss(const GlmFamily& family, const Vector& theta, const Vector& x, double y) {
  if (theta.size() != x.size()) throw DimensionError("pointwise_loss: dimension mismatch");
  const double eta = x.dot(theta);
  const CumulantValues a = family.eval(eta);
  return {a.value - y * eta, x * (a.d1 - y)};
}

LossEval square_loss(const Vector& theta, const Vector& x, double y) {
  if (theta.size() != x.size()) throw DimensionError("square_loss: dimension mismatch");
  const double r = y - x.dot(theta);
  return {r * r, -2.0 * r * x};
}

}  // namespace mmr
