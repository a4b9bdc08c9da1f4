#include "mmrkit/duality_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mmrkit/error.hpp"

namespace mmr {

DualKind parse_dual_kind(std::string_view name) {
  if (name == "mmr-lm") return DualKind::mmr_lm;
  if (name == "mmv-lm") return DualKind::mmv_lm;
  if (name == "mmr-glm") return DualKind::mmr_glm;
  throw InputError("unknown dual kind '" + std::string(name) + "' (expected mmr-lm, mmv-lm, mmr-glm)");
}

std::string_view dual_kind_name(DualKind k) {
  switch (k) {
    case DualKind::mmr_lm: return "mmr-lm";
    case DualKind::mmv_lm: return "mmv-lm";
    case DualKind::mmr_glm: return "mmr-glm";
  }
  return "?";
}

namespace {

constexpr double kWeightTol = 1e-9;

void check_points(const std::vector<Vector>& pts, Eigen::Index p, const char* who) {
  if (pts.empty()) throw InputError(std::string(who) + ": need at least one group");
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (pts[k].size() != p)
      throw DimensionError(std::string(who) + ": group " + std::to_string(k) + " has length " +
                           std::to_string(pts[k].size()) + ", expected " + std::to_string(p));
    if (!pts[k].allFinite())
      throw InputError(std::string(who) + ": group " + std::to_string(k) + " is not finite");
  }
}

void require_pd(const SymMatrix& sigma, const char* who) {
  if (!sigma.is_positive_definite())
    throw NonPsdError(std::string(who) + ": Sigma is not positive definite");
}

Matrix stack(const std::vector<Vector>& pts) {
  Matrix B(pts.front().size(), static_cast<Eigen::Index>(pts.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) B.col(static_cast<Eigen::Index>(k)) = pts[k];
  return B;
}

std::vector<std::size_t> positive_set(const Vector& gamma) {
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < gamma.size(); ++k)
    if (gamma[k] > kWeightTol) out.push_back(static_cast<std::size_t>(k));
  return out;
}

}  // namespace

DualSolution mmr_dual_lm(const std::vector<Vector>& betas, const SymMatrix& sigma) {
  require_pd(sigma, "mmr_dual_lm");
  check_points(betas, sigma.dim(), "mmr_dual_lm");
  const Eigen::Index K = static_cast<Eigen::Index>(betas.size());

  // The objective is translation invariant on the simplex; centering keeps
  // q and M small and the difference q^T g - g^T M g well conditioned.
  const Matrix B = stack(betas);
  const Vector mean = B.rowwise().mean();
  const Matrix Bc = B.colwise() - mean;
  const Matrix SB = sigma.matrix() * Bc;
  const Matrix M = Bc.transpose() * SB;
  const Vector q = M.diagonal();

  const SimplexQpResult qp = solve_simplex_qp(q, SymMatrix::symmetrized(2.0 * M));

  DualSolution out;
  out.kind = DualKind::mmr_lm;
  out.gamma_star = qp.weights;
  out.iterations = qp.iterations;
  const Vector centered = Bc * qp.weights;
  out.theta_star = centered + mean;
  out.center = out.theta_star;
  out.radius_sq = std::max(0.0, q.dot(qp.weights) - qp.weights.dot(M * qp.weights));
  out.slacks.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Vector d = centered - Bc.col(k);
    const double dist = sigma.quad(d);
    out.slacks[k] = out.radius_sq - dist;
    if (dist >= out.radius_sq * (1.0 - kSupportRelTol)) out.supporting_set.push_back(k);
  }
  out.positive_weight_set = positive_set(out.gamma_star);
  return out;
}

DualSolution mmv_dual_lm(const std::vector<Vector>& betas, const SymMatrix& sigma) {
  require_pd(sigma, "mmv_dual_lm");
  check_points(betas, sigma.dim(), "mmv_dual_lm");
  const Eigen::Index K = static_cast<Eigen::Index>(betas.size());
  const Matrix B = stack(betas);
  const Matrix M = B.transpose() * (sigma.matrix() * B);

  const SimplexQpResult qp = solve_simplex_qp(Vector::Zero(K), SymMatrix::symmetrized(2.0 * M));

  DualSolution out;
  out.kind = DualKind::mmv_lm;
  out.gamma_star = qp.weights;
  out.iterations = qp.iterations;
  out.theta_star = B * qp.weights;
  out.center = out.theta_star;
  out.radius_sq = sigma.quad(out.theta_star);
  const Vector proj = B.transpose() * (sigma.matrix() * out.theta_star);
  out.slacks.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    // Half-space {b : b^T Sigma theta* >= V*} must contain every beta_k.
    out.slacks[k] = proj[k] - out.radius_sq;
    if (proj[k] <= out.radius_sq * (1.0 + kSupportRelTol) + 1e-9) out.supporting_set.push_back(k);
  }
  out.positive_weight_set = positive_set(out.gamma_star);
  return out;
}

ConjugateValue conjugate_eval(const Cumulant& a, const Vector& mu, const std::optional<Vector>& warm) {
  if (mu.size() != a.p()) throw DimensionError("conjugate_eval: mu has wrong length");
  if (!mu.allFinite()) throw InputError("conjugate_eval: mu is not finite");
  Vector theta = warm ? *warm : Vector::Zero(a.p());
  if (theta.size() != a.p()) throw DimensionError("conjugate_eval: warm start has wrong length");

  const double gtol = 1e-13 * (1.0 + mu.lpNorm<Eigen::Infinity>());
  const double escape = 1e3;
  auto objective = [&](const Vector& t) { return a.value(t) - t.dot(mu); };

  double f = objective(theta);
  for (int it = 0; it < 200; ++it) {
    const Vector g = a.gradient(theta) - mu;
    const double gn = g.lpNorm<Eigen::Infinity>();
    Vector step;
    try {
      step = spd_solve(SymMatrix::symmetrized(a.hessian(theta)), -g);
    } catch (const SingularityError&) {
      throw DomainError("conjugate_eval: curvature vanished; mu is outside the interior of the "
                        "gradient range");
    }
    const double small_step = 1e-6 * (1.0 + theta.norm());
    if (gn <= gtol || (gn <= 1e-9 && step.norm() <= 1e-10 * (1.0 + theta.norm()))) {
      if (step.norm() > small_step)
        throw DomainError("conjugate_eval: gradient vanishes only asymptotically; mu is on the "
                          "boundary of the gradient range");
      return {theta.dot(mu) - a.value(theta), theta};
    }
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      const Vector trial = theta + t * step;
      const double ft = objective(trial);
      if (std::isfinite(ft) && ft <= f + slack) {
        theta = trial;
        f = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (gn <= 1e-9 && step.norm() <= small_step) return {theta.dot(mu) - a.value(theta), theta};
      throw DomainError("conjugate_eval: line search stalled with gradient " + std::to_string(gn));
    }
    if (theta.norm() > escape)
      throw DomainError("conjugate_eval: maximizer diverges (|theta| > 1e3); mu is outside the "
                        "interior of the gradient range");
  }
  const Vector g = a.gradient(theta) - mu;
  if (g.lpNorm<Eigen::Infinity>() <= 1e-9) return {theta.dot(mu) - a.value(theta), theta};
  throw ConvergenceError("conjugate_eval: Newton did not converge",
                         std::vector<double>(theta.data(), theta.data() + theta.size()));
}

double bregman_div(const Cumulant& a, const Vector& theta0, const Vector& theta1) {
  if (theta0.size() != a.p() || theta1.size() != a.p())
    throw DimensionError("bregman_div: dimension mismatch");
  const double v = a.value(theta1) - a.value(theta0) - a.gradient(theta0).dot(theta1 - theta0);
  return std::max(0.0, v);
}

DualSolution mmr_dual_glm(const std::vector<Vector>& mus, const Cumulant& a, double tol, int max_iter) {
  check_points(mus, a.p(), "mmr_dual_glm");
  const Eigen::Index K = static_cast<Eigen::Index>(mus.size());
  const Matrix Mu = stack(mus);

  Vector astar(K);
  std::vector<Vector> betas(mus.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    const ConjugateValue c = conjugate_eval(a, mus[k]);
    astar[k] = c.value;
    betas[k] = c.gradient;
  }

  struct Point {
    Vector gamma;
    Vector center;
    ConjugateValue conj;
    double value;
  };
  auto evaluate = [&](const Vector& gamma, const std::optional<Vector>& warm) {
    Point pt;
    pt.gamma = gamma;
    pt.center = Mu * gamma;
    pt.conj = conjugate_eval(a, pt.center, warm);
    pt.value = astar.dot(gamma) - pt.conj.value;
    return pt;
  };

  Point cur = evaluate(Vector::Constant(K, 1.0 / static_cast<double>(K)), std::nullopt);
  int it = 0;
  bool converged = K == 1;
  for (; it < max_iter && !converged; ++it) {
    // Gradient a_k - theta^T mu_k; Hessian -Mu^T [grad^2 A(theta)]^-1 Mu.
    const Vector g = astar - Mu.transpose() * cur.conj.gradient;
    const Matrix hA = a.hessian(cur.conj.gradient);
    const Eigen::LDLT<Matrix> ldlt(hA);
    const Matrix W = Mu.transpose() * ldlt.solve(Mu);
    const SymMatrix H = SymMatrix::symmetrized(W);
    const Vector qq = g + H.matrix() * cur.gamma;
    const SimplexQpResult qp = solve_simplex_qp(qq, H, 1e-13);
    const Vector dir = qp.weights - cur.gamma;
    const double predicted = g.dot(dir);
    if (predicted <= tol * (1.0 + std::abs(cur.value)) || dir.lpNorm<Eigen::Infinity>() <= 1e-15) {
      converged = true;
      break;
    }
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h < 50; ++h, t *= 0.5) {
      Point trial = evaluate(cur.gamma + t * dir, cur.conj.gradient);
      if (trial.value >= cur.value + 1e-4 * t * predicted) {
        cur = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Ascent direction with no measurable gain: at the floating point floor.
      converged = predicted <= 1e-9 * (1.0 + std::abs(cur.value));
      if (!converged)
        throw ConvergenceError("mmr_dual_glm: line search failed",
                               std::vector<double>(cur.gamma.data(), cur.gamma.data() + K));
      break;
    }
  }
  if (!converged)
    throw ConvergenceError("mmr_dual_glm: no convergence in " + std::to_string(max_iter) + " iterations",
                           std::vector<double>(cur.gamma.data(), cur.gamma.data() + K));

  DualSolution out;
  out.kind = DualKind::mmr_glm;
  out.gamma_star = cur.gamma;
  out.center = cur.center;
  out.theta_star = cur.conj.gradient;
  out.radius_sq = std::max(0.0, cur.value);
  out.iterations = it;
  out.slacks.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    // D_{A*}(theta** || mu_k) = A*(mu_k) - A*(theta**) - theta*^T (mu_k - theta**)
    const double d = astar[k] - cur.conj.value - out.theta_star.dot(mus[k] - out.center);
    out.slacks[k] = out.radius_sq - d;
    if (d >= out.radius_sq * (1.0 - kSupportRelTol)) out.supporting_set.push_back(k);
  }
  out.positive_weight_set = positive_set(out.gamma_star);
  return out;
}

SymMatrix common_sigma(const std::vector<LocalFit>& fits, double rel_tol) {
  if (fits.empty()) throw InputError("common_sigma: no summaries");
  const Matrix& ref = fits.front().sigma_mat.matrix();
  const double scale = std::max(1.0, ref.lpNorm<Eigen::Infinity>());
  for (std::size_t k = 1; k < fits.size(); ++k) {
    const Matrix& s = fits[k].sigma_mat.matrix();
    if (s.rows() != ref.rows() || s.cols() != ref.cols())
      throw DimensionError("common_sigma: group '" + fits[k].group_id + "' has a different p");
    if ((s - ref).lpNorm<Eigen::Infinity>() > rel_tol * scale)
      throw InputError("common_sigma: group '" + fits[k].group_id + "' has a different Sigma; the "
                       "dual certificate requires a common covariance");
  }
  return fits.front().sigma_mat;
}

DegenerationReport check_degeneration(const std::vector<LocalFit>& fits, double homog_tol) {
  if (fits.empty()) throw InputError("check_degeneration: no summaries");
  const std::size_t K = fits.size();
  for (const LocalFit& f : fits)
    if (!f.loss.is_square())
      throw InputError("check_degeneration: needs square-loss summaries, group '" + f.group_id +
                       "' used " + f.loss.name());

  // delta(k, ks) = |beta_ks - beta_k|^2 under Sigma_k
  auto delta = [&](std::size_t k, std::size_t ks) {
    return fits[k].sigma_mat.quad(fits[ks].beta_hat - fits[k].beta_hat);
  };

  DegenerationReport rep;
  rep.gdro_margin.resize(static_cast<Eigen::Index>(K));
  rep.mmv_margin.resize(static_cast<Eigen::Index>(K));
  const double inf = std::numeric_limits<double>::infinity();
  double best_gdro = -inf, best_mmv = -inf;
  for (std::size_t ks = 0; ks < K; ++ks) {
    double worst_gdro = -inf, worst_mmv = inf;
    for (std::size_t k = 0; k < K; ++k) {
      if (k == ks) continue;
      const double d = delta(k, ks);
      worst_gdro = std::max(worst_gdro, fits[k].wuv + d);
      worst_mmv = std::min(worst_mmv, fits[k].wev - d);
    }
    const double gm = K == 1 ? 0.0 : fits[ks].wuv - worst_gdro;
    const double mm = K == 1 ? 0.0 : worst_mmv - fits[ks].wev;
    rep.gdro_margin[static_cast<Eigen::Index>(ks)] = gm;
    rep.mmv_margin[static_cast<Eigen::Index>(ks)] = mm;
    if (gm >= 0.0 && gm > best_gdro) {
      best_gdro = gm;
      rep.gdro_group = ks;
    }
    if (mm >= 0.0 && mm > best_mmv) {
      best_mmv = mm;
      rep.mmv_group = ks;
    }
  }
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t k = j + 1; k < K; ++k)
      rep.max_pairwise_distance =
          std::max(rep.max_pairwise_distance, (fits[j].beta_hat - fits[k].beta_hat).norm());
  rep.mmr_homogeneous = rep.max_pairwise_distance <= homog_tol;
  return rep;
}

}  // namespace mmr
