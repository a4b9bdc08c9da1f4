#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmrkit/cumulant.hpp"
#include "mmrkit/data_model.hpp"
#include "mmrkit/robust_solvers.hpp"

namespace mmr {

struct BallRegion {
  Vector center;
  double radius = 1.0;
};

void check_ball(const BallRegion& b);

/// Mixture of uniform distributions on balls; draws are shifted by -shift.
struct MetaDistribution {
  std::vector<BallRegion> components;
  Vector weights;
  Vector shift;  // empty means zero
};

void check_meta(const MetaDistribution& m);

/// K coefficient vectors: pick a component by weight, then draw uniformly in
/// the ball (uniform direction, radius r U^{1/p}), then subtract the shift.
std::vector<Vector> sample_meta(const MetaDistribution& meta, int K, std::uint64_t seed);

/// X ~ N(0, I_p), y = X beta_k + eps with Var(eps) = noise_var[k].
GroupedDataset gen_lm_data(const std::vector<Vector>& betas, const Vector& noise_var, int n,
                           std::uint64_t seed);
/// Noise variance p + sigma2 |beta_k|^2.
GroupedDataset gen_lm_data(const std::vector<Vector>& betas, int n, double sigma2, std::uint64_t seed);

/// X ~ N(x_mean, I_p), y | X ~ Bernoulli(A'(X^T beta_k)).
GroupedDataset gen_logit_data(const std::vector<Vector>& betas, int n, std::uint64_t seed,
                              double x_mean = 0.5);

/// X ~ N(x_mean, I_p), y a fair coin independent of X.
GroupSample gen_uninformative_group(int n, Eigen::Index p, std::uint64_t seed, double x_mean = 0.5,
                                    std::string id = "uninformative");

/// sup over the union of balls of |theta - beta|^2, i.e. max_b (|theta - c_b| + r_b)^2.
double ante_worst_regret_lm(const Vector& theta, const std::vector<BallRegion>& region);

/// sup over the union of balls of D_A(beta || theta). The divergence is
/// nondecreasing along rays leaving theta, so the sup sits on each sphere;
/// found by projected ascent on the sphere from 2p + 2 antipodal starts.
double ante_worst_regret_glm(const Vector& theta, const std::vector<BallRegion>& region,
                             const Cumulant& a);

/// Secondary linear-model metrics for X ~ N(0, I) and noise p + sigma2 |beta0|^2,
/// where beta0 = beta + shift is the unshifted coefficient.
struct LmSecondary {
  double worst_risk = 0.0;
  double mean_risk = 0.0;
  double worst_explained_variance = 0.0;
};

LmSecondary lm_secondary_metrics(const Vector& theta, const MetaDistribution& meta, double sigma2);

enum class Scenario { pi_sweep, wuv_sweep, wev_sweep, glm_pi_sweep, uninformative };

Scenario parse_scenario(std::string_view name);
std::string_view scenario_name(Scenario s);

enum class EvalRegion { pi_ball, union_of_balls };

struct ScenarioConfig {
  Scenario scenario = Scenario::pi_sweep;
  int K = 30;
  int n = 300;
  int p = 5;
  double sigma2 = 0.5;
  double pi = 0.2;
  double delta = 0.0;
  /// pi (pi-sweep, glm-pi-sweep), sigma2 (wuv-sweep), delta (wev-sweep),
  /// number of added uninformative groups, 0 or 1 (uninformative).
  std::vector<double> grid;
  int replications = 10;
  std::uint64_t seed = 20240601;
  /// Mixture pi Uniform(ball_pi) + (1 - pi) Uniform(ball_rest).
  BallRegion ball_pi;
  BallRegion ball_rest;
  EvalRegion region = EvalRegion::pi_ball;
  double x_mean = 0.5;
  std::vector<Method> methods{Method::pooled, Method::gdro, Method::mmv, Method::mmr};
  SolverOptions solver;
  /// 0: MMRKIT_THREADS, else hardware concurrency.
  int threads = 0;
};

/// Defaults per scenario: balls centered at (3,...,3) radius 3 and
/// (1,3,...,3) radius 1; p = 5 for the linear sweeps, p = 2 for the
/// logistic ones, whose regret is evaluated over the union of balls.
/// The linear sweeps put pi on the large ball, the logistic ones on the small one.
ScenarioConfig default_config(Scenario s);
/// Resets both balls to the defaults for c.scenario and c.p.
void set_default_balls(ScenarioConfig& c);
void check_config(const ScenarioConfig& c);

struct MetricRow {
  double grid_value = 0.0;
  int replication = 0;
  Method method = Method::mmr;
  std::string metric;
  double value = 0.0;
};

struct CellError {
  double grid_value = 0.0;
  int replication = 0;
  std::string method;  // empty when data generation failed
  std::string message;
};

struct AggregateRow {
  double grid_value = 0.0;
  Method method = Method::mmr;
  std::string metric;
  double mean = 0.0;
  double se = 0.0;
  int count = 0;
};

struct ScenarioReport {
  ScenarioConfig config;
  std::vector<MetricRow> rows;
  std::vector<CellError> errors;
  std::vector<AggregateRow> aggregates;

  /// Aggregate mean, or nullopt when no replication produced a value.
  std::optional<double> mean(Method m, double grid_value, std::string_view metric = "worst_regret") const;
};

/// Thread count from MMRKIT_THREADS, else hardware concurrency (at least 1).
int default_thread_count();

ScenarioReport run_scenario(const ScenarioConfig& config);

/// Pairwise summation.
double pairwise_sum(const double* x, std::size_t n);

}  // namespace mmr
