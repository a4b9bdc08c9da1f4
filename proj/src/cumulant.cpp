#include "mmrkit/cumulant.hpp"

#include <cmath>
#include <numbers>
#include <span>

#include "mmrkit/data_model.hpp"
#include "mmrkit/error.hpp"
#include "mmrkit/kernels.hpp"

namespace mmr {

namespace {

std::span<const double> col(const Matrix& X, Eigen::Index j) {
  return {X.col(j).data(), static_cast<std::size_t>(X.rows())};
}

double fourth_derivative(const GlmFamily& fam, double eta) {
  switch (fam.tag()) {
    case FamilyTag::gaussian: return 0.0;
    case FamilyTag::logistic: {
      const double s = fam.mean(eta);
      return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s);
    }
    case FamilyTag::poisson: return std::exp(eta);
  }
  return 0.0;
}

}  // namespace

EmpiricalCumulant::EmpiricalCumulant(Matrix X, GlmFamily family)
    : X_(std::move(X)), family_(family) {
  if (X_.rows() < 1 || X_.cols() < 1) throw DataError("EmpiricalCumulant: empty covariate sample");
  if (!X_.allFinite()) throw DataError("EmpiricalCumulant: non-finite covariates");
  if (gram_rank(X_) < X_.cols()) throw DataError("EmpiricalCumulant: covariates are rank deficient");
}

double EmpiricalCumulant::value(const Vector& theta) const {
  if (theta.size() != p()) throw DimensionError("EmpiricalCumulant: dimension mismatch");
  const Vector eta = X_ * theta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) s += family_.value(eta[i]);
  return s / static_cast<double>(X_.rows());
}

Vector EmpiricalCumulant::gradient(const Vector& theta) const {
  if (theta.size() != p()) throw DimensionError("EmpiricalCumulant: dimension mismatch");
  const Vector eta = X_ * theta;
  Vector m(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) m[i] = family_.mean(eta[i]);
  Vector g(p());
  const std::span<const double> ms{m.data(), static_cast<std::size_t>(m.size())};
  for (Eigen::Index j = 0; j < p(); ++j) g[j] = kernels::dot(col(X_, j), ms);
  return g / static_cast<double>(X_.rows());
}

Matrix EmpiricalCumulant::hessian(const Vector& theta) const {
  if (theta.size() != p()) throw DimensionError("EmpiricalCumulant: dimension mismatch");
  const Vector eta = X_ * theta;
  Vector w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) w[i] = family_.variance(eta[i]);
  const std::span<const double> ws{w.data(), static_cast<std::size_t>(w.size())};
  Matrix h(p(), p());
  const double inv_n = 1.0 / static_cast<double>(X_.rows());
  for (Eigen::Index j = 0; j < p(); ++j)
    for (Eigen::Index k = 0; k <= j; ++k) {
      const double v = kernels::wdot(col(X_, j), col(X_, k), ws) * inv_n;
      h(j, k) = v;
      h(k, j) = v;
    }
  return h;
}

GaussianDesignCumulant::GaussianDesignCumulant(Vector mean, GlmFamily family)
    : mean_(std::move(mean)), family_(family) {
  if (mean_.size() < 1 || !mean_.allFinite())
    throw InputError("GaussianDesignCumulant: invalid mean vector");
}

GaussianDesignCumulant::Moments GaussianDesignCumulant::moments(const Vector& theta,
                                                                int order) const {
  if (theta.size() != p()) throw DimensionError("GaussianDesignCumulant: dimension mismatch");
  if (!theta.allFinite()) throw InputError("GaussianDesignCumulant: non-finite theta");
  const double loc = mean_.dot(theta);
  const double scale = theta.norm();
  Moments m{0, 0, 0, 0, 0};
  if (scale == 0.0) {
    m.a0 = family_.value(loc);
    m.a1 = family_.mean(loc);
    m.a2 = family_.variance(loc);
    m.a3 = family_.d3(loc);
    m.a4 = fourth_derivative(family_, loc);
    return m;
  }
  // Trapezoid on z in [-12, 12]: spectrally accurate for smooth integrands
  // that decay like the normal density. The step resolves features of width
  // ~1 in eta, i.e. 1/scale in z.
  const double zmax = 12.0;
  const double h = 0.08 / std::max(1.0, scale);
  const int half = static_cast<int>(std::ceil(zmax / h));
  const double norm = h / std::sqrt(2.0 * std::numbers::pi);
  for (int i = -half; i <= half; ++i) {
    const double z = i * h;
    const double w = norm * std::exp(-0.5 * z * z);
    const double eta = loc + scale * z;
    m.a0 += w * family_.value(eta);
    m.a1 += w * family_.mean(eta);
    m.a2 += w * family_.variance(eta);
    if (order >= 3) m.a3 += w * family_.d3(eta);
    if (order >= 4) m.a4 += w * fourth_derivative(family_, eta);
  }
  return m;
}

double GaussianDesignCumulant::value(const Vector& theta) const {
  return moments(theta, 0).a0;
}

Vector GaussianDesignCumulant::gradient(const Vector& theta) const {
  // E[X A'(eta)] = mean E[A'] + theta E[A'']
  const Moments m = moments(theta, 2);
  return mean_ * m.a1 + theta * m.a2;
}

Matrix GaussianDesignCumulant::hessian(const Vector& theta) const {
  // E[X X^T A''(eta)] with X = mean + Z:
  //   mean mean^T E[A''] + (mean theta^T + theta mean^T) E[A''']
  //   + I E[A''] + theta theta^T E[A'''']
  const Moments m = moments(theta, 4);
  const Eigen::Index d = p();
  Matrix h = (mean_ * mean_.transpose()) * m.a2;
  h += (mean_ * theta.transpose() + theta * mean_.transpose()) * m.a3;
  h += Matrix::Identity(d, d) * m.a2;
  h += (theta * theta.transpose()) * m.a4;
  return 0.5 * (h + h.transpose());
}

}  // namespace mmr
