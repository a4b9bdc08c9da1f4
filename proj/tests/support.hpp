#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mmrkit/data_model.hpp"
#include "mmrkit/numerics.hpp"
#include "mmrkit/rng.hpp"

namespace mmr::test {

inline Matrix gaussian_design(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

/// Groups sharing one design with noiseless responses, so every group has
/// the same Sigma-hat and beta-hat equals its coefficient exactly.
inline GroupedDataset exact_dataset(const Matrix& X, const std::vector<Vector>& betas) {
  std::vector<GroupSample> gs;
  for (std::size_t k = 0; k < betas.size(); ++k)
    gs.push_back({"g" + std::to_string(k + 1), X, X * betas[k]});
  return GroupedDataset(std::move(gs));
}

/// A design whose Gram matrix n^-1 X^T X is exactly the identity: rows +-e_j scaled.
inline Matrix orthogonal_design(Eigen::Index p) {
  Matrix X = Matrix::Zero(2 * p, p);
  const double s = std::sqrt(static_cast<double>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    X(2 * j, j) = s;
    X(2 * j + 1, j) = -s;
  }
  return X;
}

struct Circle {
  Vector center;
  double radius_sq = 0.0;
};

/// Exact smallest enclosing circle in the plane by enumerating diameter pairs
/// and circumcircles of triples.
inline Circle smallest_enclosing_circle(const std::vector<Vector>& pts) {
  const double eps = 1e-12;
  auto encloses = [&](const Vector& c, double r2) {
    for (const Vector& q : pts)
      if ((q - c).squaredNorm() > r2 * (1.0 + eps) + eps) return false;
    return true;
  };
  Circle best{pts.front(), 0.0};
  bool found = pts.size() == 1;
  auto consider = [&](const Vector& c, double r2) {
    if ((!found || r2 < best.radius_sq) && encloses(c, r2)) {
      best = {c, r2};
      found = true;
    }
  };
  const std::size_t K = pts.size();
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = i + 1; j < K; ++j) {
      const Vector c = 0.5 * (pts[i] + pts[j]);
      consider(c, (pts[i] - c).squaredNorm());
      for (std::size_t k = j + 1; k < K; ++k) {
        const Vector a = pts[i], b = pts[j], d = pts[k];
        const double D = 2.0 * (a[0] * (b[1] - d[1]) + b[0] * (d[1] - a[1]) + d[0] * (a[1] - b[1]));
        if (std::abs(D) < 1e-14) continue;
        Vector cc(2);
        cc[0] = (a.squaredNorm() * (b[1] - d[1]) + b.squaredNorm() * (d[1] - a[1]) +
                 d.squaredNorm() * (a[1] - b[1])) / D;
        cc[1] = (a.squaredNorm() * (d[0] - b[0]) + b.squaredNorm() * (a[0] - d[0]) +
                 d.squaredNorm() * (b[0] - a[0])) / D;
        consider(cc, (a - cc).squaredNorm());
      }
    }
  return best;
}

inline double cross2(const Vector& a, const Vector& b) { return a[0] * b[1] - a[1] * b[0]; }

/// Closest point of conv(pts) to the origin in the plane: zero when some
/// triangle contains the origin, else the best point over all segments.
inline Vector min_norm_hull_point(const std::vector<Vector>& pts) {
  const std::size_t K = pts.size();
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = i + 1; j < K; ++j)
      for (std::size_t k = j + 1; k < K; ++k) {
        const double s1 = cross2(pts[j] - pts[i], -pts[i]);
        const double s2 = cross2(pts[k] - pts[j], -pts[j]);
        const double s3 = cross2(pts[i] - pts[k], -pts[k]);
        if ((s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0))
          if (std::abs(cross2(pts[j] - pts[i], pts[k] - pts[i])) > 1e-14) return Vector::Zero(2);
      }
  Vector best = pts.front();
  for (std::size_t i = 0; i < K; ++i) {
    if (pts[i].squaredNorm() < best.squaredNorm()) best = pts[i];
    for (std::size_t j = i + 1; j < K; ++j) {
      const Vector d = pts[j] - pts[i];
      const double t = std::clamp(-pts[i].dot(d) / d.squaredNorm(), 0.0, 1.0);
      const Vector c = pts[i] + t * d;
      if (c.squaredNorm() < best.squaredNorm()) best = c;
    }
  }
  return best;
}

/// Maximum of q^T g - 0.5 g^T H g over a simplex grid with the given step.
inline double simplex_grid_max(const Vector& q, const SymMatrix& H, double step) {
  const Eigen::Index K = q.size();
  const int m = static_cast<int>(std::lround(1.0 / step));
  double best = -1e300;
  Vector g(K);
  std::vector<int> c(K, 0);
  auto eval = [&]() {
    for (Eigen::Index k = 0; k < K; ++k) g[k] = c[k] * step;
    best = std::max(best, q.dot(g) - 0.5 * H.quad(g));
  };
  auto rec = [&](auto&& self, Eigen::Index k, int left) -> void {
    if (k == K - 1) {
      c[k] = left;
      eval();
      return;
    }
    for (int v = 0; v <= left; ++v) {
      c[k] = v;
      self(self, k + 1, left - v);
    }
  };
  rec(rec, 0, m);
  return best;
}

}  // namespace mmr::test
