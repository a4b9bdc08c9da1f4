#include "mmrkit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mmrkit/error.hpp"

namespace mmr {

SymMatrix::SymMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw DimensionError("SymMatrix: matrix is not square");
  for (Eigen::Index i = 0; i < m_.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m_.cols(); ++j)
      if (m_(i, j) != m_(j, i)) throw InputError("SymMatrix: matrix is not symmetric");
}

SymMatrix SymMatrix::symmetrized(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("SymMatrix: matrix is not square");
  Matrix s = 0.5 * (m + m.transpose());
  return SymMatrix(std::move(s));
}

SymMatrix SymMatrix::identity(Eigen::Index p) { return SymMatrix(Matrix::Identity(p, p)); }

SymMatrix SymMatrix::diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

double SymMatrix::quad(const Vector& u) const {
  if (u.size() != dim()) throw DimensionError("SymMatrix::quad: dimension mismatch");
  return u.dot(m_ * u);
}

bool SymMatrix::is_positive_definite() const {
  if (dim() == 0) return false;
  Eigen::LLT<Matrix> llt(m_);
  return llt.info() == Eigen::Success;
}

Vector project_simplex(const Vector& v) {
  const Eigen::Index k = v.size();
  if (k == 0) throw DimensionError("project_simplex: empty vector");
  for (Eigen::Index i = 0; i < k; ++i)
    if (!std::isfinite(v[i])) throw InputError("project_simplex: non-finite entry");

  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    cumsum += u[j];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) tau = t;
  }
  Vector out = (v.array() - tau).max(0.0).matrix();
  const double s = out.sum();
  if (s > 0.0) out /= s;
  return out;
}

namespace {

double qp_scale(const Vector& q, const Matrix& H) {
  double s = 1.0;
  if (q.size() > 0) s = std::max(s, q.cwiseAbs().maxCoeff());
  if (H.size() > 0) s = std::max(s, H.cwiseAbs().maxCoeff());
  return s;
}

double qp_value(const Vector& q, const Matrix& H, const Vector& g) {
  return q.dot(g) - 0.5 * g.dot(H * g);
}

struct ActiveSetOutcome {
  Vector gamma;
  int iterations = 0;
  bool converged = false;
};

struct FaceStep {
  Vector step;
  bool to_boundary = false;  // unbounded face: walk until a weight hits zero
};

// Newton step for 0.5 g^T H g - q^T g restricted to the face `idx` of the
// simplex, or a descent direction in the null space of [H_FF; 1^T] when
// the face has no minimizer.
FaceStep solve_face(const Matrix& H, const Vector& grad, const std::vector<Eigen::Index>& idx,
                    double step_eps) {
  const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
  Matrix kkt = Matrix::Zero(m + 1, m + 1);
  Vector rhs = Vector::Zero(m + 1);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) kkt(a, b) = H(idx[a], idx[b]);
    kkt(a, m) = 1.0;
    kkt(m, a) = 1.0;
    rhs[a] = -grad[idx[a]];
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
  cod.setThreshold(1e-13);
  const Vector sol = cod.solve(rhs);
  const double resid = (kkt * sol - rhs).lpNorm<Eigen::Infinity>();
  const double rhs_scale = std::max(1.0, rhs.lpNorm<Eigen::Infinity>()) *
                           std::max(1.0, kkt.lpNorm<Eigen::Infinity>());
  FaceStep out;
  if (resid <= 1e-10 * rhs_scale) {
    out.step = sol.head(m);
    return out;
  }
  Matrix stacked(m + 1, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) stacked(a, b) = H(idx[a], idx[b]);
    stacked(m, a) = 1.0;
  }
  Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  const double thresh = 1e-12 * std::max(1.0, sv.size() > 0 ? sv[0] : 1.0);
  Vector g_free(m);
  for (Eigen::Index a = 0; a < m; ++a) g_free[a] = grad[idx[a]];
  Vector d = Vector::Zero(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const double sval = c < sv.size() ? sv[c] : 0.0;
    if (sval <= thresh) {
      const Vector vcol = svd.matrixV().col(c);
      d -= vcol.dot(g_free) * vcol;
    }
  }
  out.step = d;
  out.to_boundary = d.lpNorm<Eigen::Infinity>() > step_eps;
  if (!out.to_boundary) out.step.setZero();
  return out;
}

// Minimizes 0.5 g^T H g - q^T g on the simplex by a primal active-set walk
// started from the best vertex.
ActiveSetOutcome active_set(const Vector& q, const Matrix& H, double tol, int max_iter) {
  const Eigen::Index K = q.size();
  ActiveSetOutcome out;

  Eigen::Index start = 0;
  double best = 0.5 * H(0, 0) - q[0];
  for (Eigen::Index k = 1; k < K; ++k) {
    const double f = 0.5 * H(k, k) - q[k];
    if (f < best) {
      best = f;
      start = k;
    }
  }
  Vector gamma = Vector::Zero(K);
  gamma[start] = 1.0;
  std::vector<bool> free(static_cast<std::size_t>(K), false);
  free[static_cast<std::size_t>(start)] = true;

  const double step_eps = 1e-13;
  // Set after a full step: gamma already minimizes the current face.
  bool face_solved = false;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index k = 0; k < K; ++k)
      if (free[static_cast<std::size_t>(k)]) idx.push_back(k);
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    const Vector grad = H * gamma - q;

    FaceStep fs{Vector::Zero(m), false};
    if (!face_solved) fs = solve_face(H, grad, idx, step_eps);
    face_solved = false;

    if (!fs.to_boundary && fs.step.lpNorm<Eigen::Infinity>() <= step_eps) {
      // Stationary on the face; release the most negative pinned multiplier.
      double nu = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) nu += grad[idx[a]];
      nu /= static_cast<double>(m);
      Eigen::Index worst = -1;
      double worst_mult = -tol;
      for (Eigen::Index k = 0; k < K; ++k) {
        if (free[static_cast<std::size_t>(k)]) continue;
        const double mult = grad[k] - nu;
        if (mult < worst_mult) {
          worst_mult = mult;
          worst = k;
        }
      }
      if (worst < 0) {
        out.gamma = gamma;
        out.converged = true;
        return out;
      }
      free[static_cast<std::size_t>(worst)] = true;
      continue;
    }

    double alpha = fs.to_boundary ? std::numeric_limits<double>::infinity() : 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index a = 0; a < m; ++a) {
      if (fs.step[a] < 0.0) {
        const double r = gamma[idx[a]] / -fs.step[a];
        if (r < alpha) {
          alpha = r;
          blocking = idx[a];
        }
      }
    }
    if (!std::isfinite(alpha)) break;  // cannot happen for a zero-sum direction
    for (Eigen::Index a = 0; a < m; ++a) gamma[idx[a]] += alpha * fs.step[a];
    if (blocking >= 0 && (fs.to_boundary || alpha < 1.0)) {
      gamma[blocking] = 0.0;
      free[static_cast<std::size_t>(blocking)] = false;
    } else {
      face_solved = true;
    }
    gamma = gamma.cwiseMax(0.0);
    gamma /= gamma.sum();
  }
  out.gamma = gamma;
  return out;
}

ActiveSetOutcome projected_gradient(const Vector& q, const Matrix& H, const SymMatrix& Hs,
                                    const Vector& start, double tol, int max_iter) {
  ActiveSetOutcome out;
  const double step = 1.0 / (max_eigenvalue(Hs) + 1.0);
  Vector gamma = start;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it + 1;
    const Vector next = project_simplex(gamma + step * (q - H * gamma));
    const double move = (next - gamma).lpNorm<Eigen::Infinity>();
    gamma = next;
    if (move <= 1e-3 * tol && simplex_qp_kkt_violation(q, Hs, gamma, 1e-14) <= tol) {
      out.converged = true;
      break;
    }
  }
  out.gamma = gamma;
  return out;
}

}  // namespace

double simplex_qp_kkt_violation(const Vector& q, const SymMatrix& H, const Vector& gamma,
                                double support_tol) {
  const Vector r = q - H.matrix() * gamma;
  double lambda = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k < gamma.size(); ++k) {
    if (gamma[k] > support_tol) {
      lambda += r[k];
      ++count;
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  lambda /= count;
  double viol = 0.0;
  for (Eigen::Index k = 0; k < gamma.size(); ++k) {
    if (gamma[k] > support_tol)
      viol = std::max(viol, std::abs(r[k] - lambda));
    else
      viol = std::max(viol, r[k] - lambda);
  }
  return viol;
}

SimplexQpResult solve_simplex_qp(const Vector& q, const SymMatrix& H, double tol,
                                 int max_iter) {
  const Eigen::Index K = q.size();
  if (K == 0) throw DimensionError("solve_simplex_qp: empty problem");
  if (H.dim() != K) throw DimensionError("solve_simplex_qp: H and q disagree in size");
  if (!(tol > 0.0)) throw InputError("solve_simplex_qp: tol must be positive");
  if (!q.allFinite() || !H.matrix().allFinite())
    throw InputError("solve_simplex_qp: non-finite input");

  const Matrix& Hm = H.matrix();
  const double scale = qp_scale(q, Hm);
  const double eff_tol = tol * scale;

  SimplexQpResult res;
  if (K == 1) {
    res.weights = Vector::Ones(1);
    res.objective = qp_value(q, Hm, res.weights);
    res.kkt_multiplier = q[0] - Hm(0, 0);
    return res;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(Hm, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -eff_tol)
    throw NonPsdError("solve_simplex_qp: H has a negative eigenvalue " +
                      std::to_string(eig.eigenvalues().minCoeff()));

  if (Hm.cwiseAbs().maxCoeff() == 0.0) {
    // Linear program: uniform weight over the argmax set.
    const double qmax = q.maxCoeff();
    Vector g = Vector::Zero(K);
    for (Eigen::Index k = 0; k < K; ++k)
      if (q[k] >= qmax - eff_tol * 1e-3) g[k] = 1.0;
    g /= g.sum();
    res.weights = g;
    res.objective = q.dot(g);
    res.kkt_multiplier = qmax;
    return res;
  }

  ActiveSetOutcome as = active_set(q, Hm, eff_tol, max_iter);
  double viol = simplex_qp_kkt_violation(q, H, as.gamma);
  if (!as.converged || viol > eff_tol) {
    ActiveSetOutcome pg = projected_gradient(q, Hm, H, as.gamma, eff_tol, max_iter);
    const double pg_viol = simplex_qp_kkt_violation(q, H, pg.gamma, 1e-14);
    if (pg_viol < viol) {
      pg.iterations += as.iterations;
      as = pg;
      viol = pg_viol;
    }
    if (viol > eff_tol) {
      std::vector<double> best(as.gamma.data(), as.gamma.data() + K);
      throw ConvergenceError(
          "solve_simplex_qp: KKT violation " + std::to_string(viol) + " after " +
              std::to_string(as.iterations) + " iterations",
          std::move(best));
    }
  }

  res.weights = as.gamma;
  res.objective = qp_value(q, Hm, as.gamma);
  const Vector r = q - Hm * as.gamma;
  double lambda = 0.0;
  int count = 0;
  for (Eigen::Index k = 0; k < K; ++k)
    if (as.gamma[k] > 0.0) {
      lambda += r[k];
      ++count;
    }
  res.kkt_multiplier = lambda / std::max(count, 1);
  res.iterations = as.iterations;
  return res;
}

Vector spd_solve(const SymMatrix& M, const Vector& b) {
  const Eigen::Index p = M.dim();
  if (b.size() != p) throw DimensionError("spd_solve: dimension mismatch");
  if (p == 0) return Vector();
  const Matrix& A = M.matrix();
  const double pivot_tol = 1e-12 * std::max(1.0, A.diagonal().cwiseAbs().maxCoeff());

  Matrix Lf = Matrix::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double d = A(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= Lf(j, k) * Lf(j, k);
    if (!(d > pivot_tol))
      throw SingularityError("spd_solve: matrix is not positive definite (pivot " +
                             std::to_string(d) + " at column " + std::to_string(j) + ")");
    const double ljj = std::sqrt(d);
    Lf(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < p; ++i) {
      double s = A(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= Lf(i, k) * Lf(j, k);
      Lf(i, j) = s / ljj;
    }
  }

  auto solve = [&](const Vector& rhs) {
    Vector z = rhs;
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index k = 0; k < i; ++k) z[i] -= Lf(i, k) * z[k];
      z[i] /= Lf(i, i);
    }
    for (Eigen::Index i = p - 1; i >= 0; --i) {
      for (Eigen::Index k = i + 1; k < p; ++k) z[i] -= Lf(k, i) * z[k];
      z[i] /= Lf(i, i);
    }
    return z;
  };

  Vector x = solve(b);
  const Vector r = b - A * x;
  x += solve(r);
  return x;
}

double max_eigenvalue(const SymMatrix& M) {
  if (M.dim() == 0) throw DimensionError("max_eigenvalue: empty matrix");
  if (!M.matrix().allFinite()) throw InputError("max_eigenvalue: non-finite entries");
  const Eigen::SelfAdjointEigenSolver<Matrix> es(M.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("max_eigenvalue: eigensolver failed");
  return es.eigenvalues()[M.dim() - 1];
}

double min_eigenvalue(const SymMatrix& M) {
  return -max_eigenvalue(SymMatrix(Matrix(-M.matrix())));
}

}  // namespace mmr
