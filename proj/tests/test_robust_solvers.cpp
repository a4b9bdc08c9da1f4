#include <doctest.h>

#include <cmath>

#include "mmrkit/data_model.hpp"
#include "mmrkit/duality_geometry.hpp"
#include "mmrkit/error.hpp"
#include "mmrkit/hiersim.hpp"
#include "mmrkit/robust_solvers.hpp"
#include "support.hpp"

using namespace mmr;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

GroupedDataset toy() {
  Matrix X(4, 1);
  X << -1, 1, -1, 1;
  Vector ya = Vector::Zero(4), yb(4);
  yb << -2, 2, -2, 2;
  return GroupedDataset({{"a", X, ya}, {"b", X, yb}});
}

GroupedDataset noisy_lm(std::uint64_t seed, int K, int p, int n) {
  Rng rng(seed, {0});
  std::vector<Vector> betas;
  for (int k = 0; k < K; ++k) betas.push_back(2.0 * rng.normal_vector(p));
  return gen_lm_data(betas, n, 0.5, seed);
}

}  // namespace

TEST_CASE("two symmetric groups meet in the middle") {
  const FitResult r = fit_mmr(toy(), LossSpec::square());
  CHECK(r.converged);
  CHECK(r.theta_hat[0] == doctest::Approx(1.0).epsilon(1e-8));
  REQUIRE(r.gamma_hat);
  CHECK((*r.gamma_hat)[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("single group reduces to the local fit") {
  const GroupedDataset one({toy().group(1)});
  for (Method m : {Method::mmr, Method::gdro, Method::pooled, Method::mmv}) {
    const FitResult r = fit_method(m, one, LossSpec::square());
    CHECK(r.theta_hat[0] == doctest::Approx(2.0).epsilon(1e-8));
  }
  const FitResult r = fit_mmr(one, LossSpec::square());
  CHECK(std::abs(r.objective) < 1e-12);
  CHECK((*r.gamma_hat)[0] == 1.0);
}

TEST_CASE("enclosing circle of four planar coefficients") {
  const Matrix X = test::orthogonal_design(2);
  const std::vector<Vector> betas{v2(0, 0), v2(4, 0), v2(1, 3), v2(2, 1)};
  const FitResult r = fit_mmr(test::exact_dataset(X, betas), LossSpec::square());
  const test::Circle c = test::smallest_enclosing_circle(betas);
  CHECK((r.theta_hat - c.center).norm() < 1e-6);
  CHECK(r.objective == doctest::Approx(c.radius_sq).epsilon(1e-8));
}

TEST_CASE("GDRO equals the common coefficient under homogeneous coefficients") {
  std::vector<Vector> betas(3, v2(1.0, -1.0));
  const GroupedDataset d = gen_lm_data(betas, Vector(Eigen::Vector3d(0.5, 2.0, 8.0)), 2000, 4);
  const FitResult g = fit_gdro(d, LossSpec::square());
  CHECK((g.theta_hat - betas[0]).norm() < 0.15);
}

TEST_CASE("GDRO degenerates toward the noisiest group at population scale") {
  const GroupedDataset d = gen_lm_data({v1(0.0), v1(1.0)}, Vector(Eigen::Vector2d(10.0, 1.0)), 100000, 5);
  const FitResult g = fit_gdro(d, LossSpec::square());
  CHECK(std::abs(g.theta_hat[0]) < 0.05);
}

TEST_CASE("pooled equals least squares on the concatenation") {
  Matrix X1(1, 1), X2(3, 1);
  X1 << 1;
  X2 << 1, 2, 3;
  const GroupedDataset d({{"a", X1, v1(5.0)}, {"b", X2, Vector(Eigen::Vector3d(1, 1, 4))}});
  const FitResult r = fit_pooled(d, LossSpec::square());
  CHECK(r.theta_hat[0] == doctest::Approx(least_squares(d.pooled()).beta_hat[0]).epsilon(1e-12));
  CHECK((*r.implicit_weights)[1] == doctest::Approx(0.75));
  const GroupedDataset rnd = noisy_lm(6, 5, 3, 40);
  CHECK((fit_pooled(rnd, LossSpec::square()).theta_hat - least_squares(rnd.pooled()).beta_hat).norm() < 1e-10);
}

TEST_CASE("MMV picks the min-norm hull point") {
  const Matrix X = test::orthogonal_design(1);
  FitResult r = fit_mmv(test::exact_dataset(X, {v1(1.0), v1(3.0)}), LossSpec::square());
  CHECK(r.theta_hat[0] == doctest::Approx(1.0).epsilon(1e-8));
  r = fit_mmv(test::exact_dataset(X, {v1(-1.0), v1(1.0)}), LossSpec::square());
  CHECK(std::abs(r.theta_hat[0]) < 1e-8);
  CHECK(std::abs(r.objective) < 1e-8);

  const Matrix X2 = test::orthogonal_design(2);
  const std::vector<Vector> betas{v2(1, 2), v2(3, 0.5), v2(2, 3), v2(4, 4)};
  r = fit_mmv(test::exact_dataset(X2, betas), LossSpec::square());
  CHECK((r.theta_hat - test::min_norm_hull_point(betas)).norm() < 1e-6);
}

TEST_CASE("MMR has the smallest worst-case empirical regret") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const GroupedDataset d = noisy_lm(seed, 6, 3, 80);
    const LossSpec sq = LossSpec::square();
    const auto fits = group_summaries(d, sq);
    SolverOptions o;
    const FitResult m = fit_mmr(d, fits, sq, o);
    const double best = worst_empirical_regret(m.theta_hat, fits, d, sq);
    for (Method other : {Method::pooled, Method::gdro, Method::mmv}) {
      const FitResult r = fit_method(other, d, sq);
      CHECK(best <= worst_empirical_regret(r.theta_hat, fits, d, sq) + o.gap_tol);
    }
    // Saddle condition: weighted groups sit at the max regret.
    const Vector reg = per_group_regrets(m.theta_hat, fits, d, sq);
    for (Eigen::Index k = 0; k < reg.size(); ++k)
      if ((*m.gamma_hat)[k] > 1e-6) CHECK(reg[k] >= reg.maxCoeff() - 1e-6);
  }
}

TEST_CASE("worst empirical regret is the max over groups") {
  const GroupedDataset d = noisy_lm(30, 4, 2, 50);
  const LossSpec sq = LossSpec::square();
  const auto fits = group_summaries(d, sq);
  Rng rng(30, {9});
  for (int t = 0; t < 10; ++t) {
    const Vector th = rng.normal_vector(2);
    double m = 0.0;
    for (std::size_t k = 0; k < fits.size(); ++k) m = std::max(m, fits[k].sigma_mat.quad(th - fits[k].beta_hat));
    CHECK(worst_empirical_regret(th, fits, d, sq) == doctest::Approx(m).epsilon(1e-12));
  }
  CHECK(worst_empirical_regret(fits[2].beta_hat, fits, d, sq) > 0.0);
}

TEST_CASE("GDRO and MMR coincide when within-group minimum risks are equal") {
  const Matrix X = test::orthogonal_design(2);
  const GroupedDataset d = test::exact_dataset(X, {v2(0, 0), v2(2, 1), v2(-1, 3)});
  const FitResult a = fit_gdro(d, LossSpec::square()), b = fit_mmr(d, LossSpec::square());
  CHECK((a.theta_hat - b.theta_hat).norm() < 1e-6);
}

TEST_CASE("Lipschitz constants for the square loss") {
  const Matrix X = test::orthogonal_design(2);
  const GroupedDataset d = test::exact_dataset(X, {v2(0, 0), v2(1, 1)});
  const auto fits = group_summaries(d, LossSpec::square());
  CHECK(estimate_lipschitz(d, fits, LossSpec::square(), Vector::Zero(2)) == doctest::Approx(2.0));
  Matrix Y = X;
  Y.col(1) *= 2.0;
  const GroupedDataset e = test::exact_dataset(Y, {v2(0, 0), v2(1, 1)});
  CHECK(estimate_lipschitz(e, group_summaries(e, LossSpec::square()), LossSpec::square(), Vector::Zero(2)) ==
        doctest::Approx(8.0));
}

TEST_CASE("logistic MMR reaches its gap tolerance") {
  Rng rng(50, {1});
  std::vector<Vector> betas;
  for (int k = 0; k < 5; ++k) betas.push_back(v2(1.0, 1.0) + rng.normal_vector(2));
  const GroupedDataset d = gen_logit_data(betas, 400, 50);
  const FitResult r = fit_mmr(d, LossSpec::glm(GlmFamily(FamilyTag::logistic)));
  CHECK(r.converged);
  CHECK(r.gap <= 1e-8);
  CHECK(r.objective >= 0.0);
}

TEST_CASE("options are validated") {
  SolverOptions o;
  o.T_max = 0;
  CHECK_THROWS_AS(validate_options(o), InputError);
  o = {};
  o.L = -1.0;
  CHECK_THROWS_AS(validate_options(o), InputError);
  o = {};
  o.init = Vector::Zero(3);
  CHECK_THROWS_AS(fit_mmr(toy(), LossSpec::square(), o), DimensionError);
  CHECK(parse_method("gdro") == Method::gdro);
  CHECK(method_name(Method::mmv) == "mmv");
  CHECK_THROWS_AS(parse_method("dro"), InputError);
}

TEST_CASE("recorded iterates and trace") {
  SolverOptions o;
  o.record_iterates = true;
  const GroupedDataset d = noisy_lm(31, 4, 2, 60);
  const FitResult r = fit_mmr(d, LossSpec::square(), o);
  CHECK(r.trace.size() <= static_cast<std::size_t>(r.iterations));
  CHECK(r.iterates.size() == r.trace.size() + 1);
}

TEST_CASE("gaussian GLM MMR matches the square-loss fit to full precision") {
  for (std::uint64_t seed : {61u, 62u, 63u}) {
    const GroupedDataset d = noisy_lm(seed, 5, 3, 80);
    SolverOptions o;
    o.gap_tol = 1e-13;
    const FitResult sq = fit_mmr(d, LossSpec::square(), o);
    const FitResult gl = fit_mmr(d, LossSpec::glm(GlmFamily(FamilyTag::gaussian)), o);
    CHECK(sq.converged);
    CHECK(gl.converged);
    CHECK((sq.theta_hat - gl.theta_hat).norm() <= 1e-10 * (1.0 + sq.theta_hat.norm()));
    CHECK(std::abs(sq.objective - 2.0 * gl.objective) <= 1e-10 * (1.0 + sq.objective));
  }
}
