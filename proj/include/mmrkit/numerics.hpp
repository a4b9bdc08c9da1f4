#pragma once

#include <Eigen/Dense>

namespace mmr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense symmetric matrix. Construction rejects input that is not exactly
/// symmetric; use `symmetrized` for matrices assembled in floating point.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Matrix m);

  static SymMatrix symmetrized(const Matrix& m);
  static SymMatrix identity(Eigen::Index p);
  static SymMatrix diagonal(const Vector& d);

  Eigen::Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

  /// u^T M u
  double quad(const Vector& u) const;
  bool is_positive_definite() const;

 private:
  Matrix m_;
};

struct SimplexQpResult {
  Vector weights;
  double objective = 0.0;
  double kkt_multiplier = 0.0;
  int iterations = 0;
};

/// Euclidean projection onto the probability simplex.
Vector project_simplex(const Vector& v);

/// Maximizes q^T g - 0.5 g^T H g over the probability simplex.
///
/// Primal active-set method: each step solves the equality-constrained
/// problem on the current support (minimum-norm solution when H is singular
/// on it) and walks to the boundary along a null-space descent direction
/// when that face is unbounded. Falls back to projected gradient if the
/// active-set loop hits the iteration cap.
///
/// `tol` is applied relative to max(1, |q|_inf, |H|_max). Throws NonPsdError
/// when H has an eigenvalue below -tol (same scaling) and ConvergenceError,
/// carrying the best iterate, when neither method reaches the KKT tolerance.
SimplexQpResult solve_simplex_qp(const Vector& q, const SymMatrix& H, double tol = 1e-10,
                                 int max_iter = 100000);

/// Max KKT violation of `gamma` for the simplex QP, in the maximization form:
/// free coordinates must share the multiplier, zero coordinates must not
/// exceed it. Used by tests and by the solver's own acceptance check.
double simplex_qp_kkt_violation(const Vector& q, const SymMatrix& H, const Vector& gamma,
                                double support_tol = 0.0);

/// Solves M x = b by Cholesky with one step of iterative refinement.
/// Throws SingularityError if a pivot falls below 1e-12 * max(1, max diag).
Vector spd_solve(const SymMatrix& M, const Vector& b);

/// Extreme eigenvalues (symmetric QR via Eigen).
double max_eigenvalue(const SymMatrix& M);
double min_eigenvalue(const SymMatrix& M);

}  // namespace mmr
