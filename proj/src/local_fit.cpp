#include "mmrkit/local_fit.hpp"

#include <cmath>
#include <limits>
#include <span>

#include "mmrkit/error.hpp"
#include "mmrkit/kernels.hpp"

namespace mmr {

LossSpec LossSpec::parse(std::string_view name) {
  if (name == "square") return square();
  return glm(GlmFamily::parse(name));
}

const GlmFamily& LossSpec::family() const {
  if (!family_) throw InputError("square loss has no GLM family");
  return *family_;
}

std::string LossSpec::name() const {
  return family_ ? std::string(family_->name()) : std::string("square");
}

namespace {

std::span<const double> col(const Matrix& X, Eigen::Index j) {
  return {X.col(j).data(), static_cast<std::size_t>(X.rows())};
}

std::span<const double> span_of(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// eta = X theta, accumulated column by column.
Vector linear_predictor(const Matrix& X, const Vector& theta) {
  Vector eta = Vector::Zero(X.rows());
  std::span<double> out{eta.data(), static_cast<std::size_t>(eta.size())};
  for (Eigen::Index j = 0; j < X.cols(); ++j) kernels::axpy(theta[j], col(X, j), out);
  return eta;
}

void check_theta(const GroupSample& s, const Vector& theta, const char* who) {
  if (theta.size() != s.p())
    throw DimensionError(std::string(who) + ": theta has length " + std::to_string(theta.size()) +
                         ", group '" + s.group_id + "' has p = " + std::to_string(s.p()));
}

}  // namespace

SymMatrix second_moment(const GroupSample& s) {
  const Eigen::Index p = s.p();
  const double inv_n = 1.0 / static_cast<double>(s.n());
  Matrix m(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index k = 0; k <= j; ++k) {
      const double v = kernels::dot(col(s.X, j), col(s.X, k)) * inv_n;
      m(j, k) = v;
      m(k, j) = v;
    }
  return SymMatrix(std::move(m));
}

Vector cross_moment(const GroupSample& s) {
  Vector mu(s.p());
  const double inv_n = 1.0 / static_cast<double>(s.n());
  for (Eigen::Index j = 0; j < s.p(); ++j) mu[j] = kernels::dot(col(s.X, j), span_of(s.y)) * inv_n;
  return mu;
}

RiskEval empirical_risk(const GroupSample& s, const LossSpec& loss, const Vector& theta,
                        bool with_hessian) {
  check_theta(s, theta, "empirical_risk");
  const Eigen::Index n = s.n();
  const Eigen::Index p = s.p();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Vector eta = linear_predictor(s.X, theta);

  // Per-row derivative of the loss in eta, and its curvature.
  Vector dl(n);
  Vector curv;
  RiskEval out;
  double total = 0.0;
  if (loss.is_square()) {
    const Vector r = s.y - eta;
    total = kernels::dot(span_of(r), span_of(r));
    dl = -2.0 * r;
    if (with_hessian) curv = Vector::Constant(n, 2.0);
  } else {
    const GlmFamily& fam = loss.family();
    if (with_hessian) curv.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = eta[i];
      if (!std::isfinite(e)) throw InputError("empirical_risk: non-finite linear predictor");
      total += fam.value(e) - s.y[i] * e;
      dl[i] = fam.mean(e) - s.y[i];
      if (with_hessian) curv[i] = fam.variance(e);
    }
  }
  out.value = total * inv_n;
  out.gradient.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) out.gradient[j] = kernels::dot(col(s.X, j), span_of(dl)) * inv_n;
  if (with_hessian) {
    Matrix h(p, p);
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index k = 0; k <= j; ++k) {
        const double v = kernels::wdot(col(s.X, j), col(s.X, k), span_of(curv)) * inv_n;
        h(j, k) = v;
        h(k, j) = v;
      }
    out.hessian = std::move(h);
  }
  return out;
}

LocalFit least_squares(const GroupSample& s) {
  check_group_sample(s);
  LocalFit fit;
  fit.group_id = s.group_id;
  fit.loss = LossSpec::square();
  fit.n = s.n();
  fit.sigma_mat = second_moment(s);
  fit.mu_hat = cross_moment(s);
  try {
    fit.beta_hat = spd_solve(fit.sigma_mat, fit.mu_hat);
  } catch (const SingularityError& e) {
    throw SingularityError("group '" + s.group_id + "': X^T X is singular (" + e.what() + ")");
  }
  Vector r = s.y;
  std::span<double> rs{r.data(), static_cast<std::size_t>(r.size())};
  for (Eigen::Index j = 0; j < s.p(); ++j) kernels::axpy(-fit.beta_hat[j], col(s.X, j), rs);
  fit.wuv = kernels::dot(span_of(r), span_of(r)) / static_cast<double>(s.n());
  fit.wmr = fit.wuv;
  fit.wev = fit.sigma_mat.quad(fit.beta_hat);
  return fit;
}

LocalFit glm_newton(const GroupSample& s, const GlmFamily& family) {
  return glm_newton(s, family, Vector::Zero(s.p()), NewtonOptions{});
}

LocalFit glm_newton(const GroupSample& s, const GlmFamily& family, const Vector& init,
                    const NewtonOptions& opts) {
  check_group_sample(s);
  if (!(opts.tol > 0.0)) throw InputError("glm_newton: tol must be positive");
  check_theta(s, init, "glm_newton");
  const LossSpec loss = LossSpec::glm(family);
  const double escape_norm = 1e3 * (1.0 + init.norm());
  const std::string where = "group '" + s.group_id + "'";

  Vector beta = init;
  RiskEval cur = empirical_risk(s, loss, beta, true);
  bool converged = false;
  for (int it = 0; it < opts.max_iter; ++it) {
    const double score = cur.gradient.lpNorm<Eigen::Infinity>();
    Vector step;
    try {
      step = spd_solve(SymMatrix::symmetrized(*cur.hessian), -cur.gradient);
    } catch (const SingularityError&) {
      if (gram_rank(s.X) == s.p())
        throw NonCompactError(where + ": GLM curvature vanished (risk has no minimizer; "
                              "separated or boundary data)");
      throw SingularityError(where + ": X^T X is singular");
    }
    if (score <= opts.tol) {
      if (step.norm() <= 1e-4 * (1.0 + beta.norm())) {
        converged = true;
        break;
      }
      throw NonCompactError(where + ": score vanished while Newton steps stay large "
                            "(risk has no minimizer; separated or boundary data)");
    }

    // Rounding-level increases are accepted so that the final quadratic steps go through.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur.value));
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Vector trial = beta + t * step;
      RiskEval next = empirical_risk(s, loss, trial, true);
      if (std::isfinite(next.value) && next.value <= cur.value + slack) {
        beta = trial;
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (cur.gradient.lpNorm<Eigen::Infinity>() <= 10.0 * opts.tol) {
        converged = true;
        break;
      }
      throw ConvergenceError(where + ": line search failed after " +
                                 std::to_string(opts.max_halvings) + " halvings",
                             std::vector<double>(beta.data(), beta.data() + beta.size()));
    }
    if (beta.norm() > escape_norm && cur.gradient.lpNorm<Eigen::Infinity>() > opts.tol)
      throw NonCompactError(where + ": coefficients diverge (|beta| > " +
                            std::to_string(escape_norm) + "); risk has no minimizer");
  }
  if (!converged) {
    if (cur.gradient.lpNorm<Eigen::Infinity>() > opts.tol)
      throw ConvergenceError(where + ": Newton did not converge in " +
                                 std::to_string(opts.max_iter) + " iterations",
                             std::vector<double>(beta.data(), beta.data() + beta.size()));
  }

  LocalFit fit;
  fit.group_id = s.group_id;
  fit.loss = loss;
  fit.n = s.n();
  fit.beta_hat = beta;
  fit.wmr = cur.value;
  fit.sigma_mat = second_moment(s);
  fit.mu_hat = cross_moment(s);
  // Square-loss diagnostics, for comparability with the linear pipeline.
  const LocalFit ls = least_squares(s);
  fit.wuv = ls.wuv;
  fit.wev = ls.wev;
  return fit;
}

RegretEval empirical_regret(const Vector& theta, const LocalFit& fit, const GroupSample& s,
                            const LossSpec& loss) {
  if (!(fit.loss == loss))
    throw InputError("empirical_regret: fit for group '" + fit.group_id + "' used loss '" +
                     fit.loss.name() + "', requested '" + loss.name() + "'");
  if (fit.group_id != s.group_id || fit.n != s.n())
    throw InputError("empirical_regret: fit '" + fit.group_id + "' does not match sample '" +
                     s.group_id + "'");
  check_theta(s, theta, "empirical_regret");
  RegretEval out;
  if (loss.is_square()) {
    const Vector d = theta - fit.beta_hat;
    const Vector sd = fit.sigma_mat.matrix() * d;
    out.regret = d.dot(sd);
    out.gradient = 2.0 * sd;
  } else {
    RiskEval r = empirical_risk(s, loss, theta, false);
    out.regret = r.value - fit.wmr;
    out.gradient = std::move(r.gradient);
  }
  return out;
}

std::vector<LocalFit> group_summaries(const GroupedDataset& data, const LossSpec& loss) {
  std::vector<LocalFit> fits;
  fits.reserve(data.K());
  for (const GroupSample& g : data.groups()) {
    if (loss.is_square())
      fits.push_back(least_squares(g));
    else
      fits.push_back(glm_newton(g, loss.family()));
  }
  return fits;
}

}  // namespace mmr
