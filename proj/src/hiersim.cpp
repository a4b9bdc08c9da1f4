#include "mmrkit/hiersim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "mmrkit/error.hpp"
#include "mmrkit/local_fit.hpp"
#include "mmrkit/rng.hpp"

namespace mmr {

void check_ball(const BallRegion& b) {
  if (b.center.size() < 1 || !b.center.allFinite()) throw InputError("ball center must be finite and nonempty");
  if (!(b.radius > 0.0) || !std::isfinite(b.radius)) throw InputError("ball radius must be positive");
}

void check_meta(const MetaDistribution& m) {
  if (m.components.empty()) throw InputError("meta-distribution has no components");
  const Eigen::Index p = m.components.front().center.size();
  for (const BallRegion& b : m.components) {
    check_ball(b);
    if (b.center.size() != p) throw DimensionError("meta-distribution balls differ in dimension");
  }
  if (m.weights.size() != static_cast<Eigen::Index>(m.components.size()))
    throw DimensionError("meta-distribution needs one weight per component");
  if ((m.weights.array() < 0.0).any() || std::abs(m.weights.sum() - 1.0) > 1e-12)
    throw InputError("meta-distribution weights must lie on the simplex");
  if (m.shift.size() != 0 && m.shift.size() != p) throw DimensionError("shift has the wrong length");
}

std::vector<Vector> sample_meta(const MetaDistribution& meta, int K, std::uint64_t seed) {
  check_meta(meta);
  if (K < 1) throw InputError("sample_meta: K must be at least 1");
  const Eigen::Index p = meta.components.front().center.size();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    Rng rng(seed, {static_cast<std::uint64_t>(k)});
    const double u = rng.uniform();
    std::size_t c = 0;
    double acc = meta.weights[0];
    while (u >= acc && c + 1 < meta.components.size()) acc += meta.weights[static_cast<Eigen::Index>(++c)];
    const BallRegion& b = meta.components[c];
    const Vector dir = rng.unit_direction(p);
    const double r = b.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(p));
    Vector beta = b.center + r * dir;
    if (meta.shift.size() != 0) beta -= meta.shift;
    out.push_back(std::move(beta));
  }
  return out;
}

namespace {

Matrix normal_design(Rng& rng, int n, Eigen::Index p, double mean) {
  Matrix X(n, p);
  // Row-major draw order so that a row does not depend on n.
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = mean + rng.normal();
  return X;
}

std::string group_name(std::size_t k) { return "g" + std::to_string(k + 1); }

}  // namespace

GroupedDataset gen_lm_data(const std::vector<Vector>& betas, const Vector& noise_var, int n,
                           std::uint64_t seed) {
  if (betas.empty()) throw InputError("gen_lm_data: no coefficients");
  const Eigen::Index p = betas.front().size();
  if (n < p + 1) throw InputError("gen_lm_data: need n >= p + 1");
  if (noise_var.size() != static_cast<Eigen::Index>(betas.size()))
    throw DimensionError("gen_lm_data: one noise variance per group");
  std::vector<GroupSample> groups;
  groups.reserve(betas.size());
  for (std::size_t k = 0; k < betas.size(); ++k) {
    if (betas[k].size() != p) throw DimensionError("gen_lm_data: coefficients differ in length");
    const double sd = std::sqrt(noise_var[static_cast<Eigen::Index>(k)]);
    Rng rng(seed, {static_cast<std::uint64_t>(k)});
    GroupSample g;
    g.group_id = group_name(k);
    g.X = normal_design(rng, n, p, 0.0);
    g.y = g.X * betas[k];
    for (int i = 0; i < n; ++i) g.y[i] += sd * rng.normal();
    groups.push_back(std::move(g));
  }
  return GroupedDataset(std::move(groups));
}

GroupedDataset gen_lm_data(const std::vector<Vector>& betas, int n, double sigma2, std::uint64_t seed) {
  if (!(sigma2 >= 0.0)) throw InputError("gen_lm_data: sigma2 must be nonnegative");
  Vector var(static_cast<Eigen::Index>(betas.size()));
  for (std::size_t k = 0; k < betas.size(); ++k)
    var[static_cast<Eigen::Index>(k)] = static_cast<double>(betas[k].size()) + sigma2 * betas[k].squaredNorm();
  return gen_lm_data(betas, var, n, seed);
}

GroupedDataset gen_logit_data(const std::vector<Vector>& betas, int n, std::uint64_t seed, double x_mean) {
  if (betas.empty()) throw InputError("gen_logit_data: no coefficients");
  const Eigen::Index p = betas.front().size();
  if (n < p + 1) throw InputError("gen_logit_data: need n >= p + 1");
  const GlmFamily logit(FamilyTag::logistic);
  std::vector<GroupSample> groups;
  for (std::size_t k = 0; k < betas.size(); ++k) {
    if (betas[k].size() != p) throw DimensionError("gen_logit_data: coefficients differ in length");
    Rng rng(seed, {static_cast<std::uint64_t>(k)});
    GroupSample g;
    g.group_id = group_name(k);
    g.X = normal_design(rng, n, p, x_mean);
    const Vector eta = g.X * betas[k];
    g.y.resize(n);
    for (int i = 0; i < n; ++i) g.y[i] = rng.bernoulli(logit.mean(eta[i])) ? 1.0 : 0.0;
    groups.push_back(std::move(g));
  }
  return GroupedDataset(std::move(groups));
}

GroupSample gen_uninformative_group(int n, Eigen::Index p, std::uint64_t seed, double x_mean,
                                    std::string id) {
  if (n < 1 || p < 1) throw InputError("gen_uninformative_group: n and p must be positive");
  Rng rng(seed, {0x756e696eULL});
  GroupSample g;
  g.group_id = std::move(id);
  g.X = normal_design(rng, n, p, x_mean);
  g.y.resize(n);
  for (int i = 0; i < n; ++i) g.y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return g;
}

double ante_worst_regret_lm(const Vector& theta, const std::vector<BallRegion>& region) {
  if (region.empty()) throw InputError("ante_worst_regret_lm: empty region");
  double best = 0.0;
  for (const BallRegion& b : region) {
    check_ball(b);
    if (b.center.size() != theta.size()) throw DimensionError("ante_worst_regret_lm: dimension mismatch");
    const double d = (theta - b.center).norm() + b.radius;
    best = std::max(best, d * d);
  }
  return best;
}

namespace {

// max of D_A(c + r u || theta) over the unit sphere, by ascent with an
// adaptive step and renormalization.
double sphere_ascent(const Vector& theta, const BallRegion& b, const Cumulant& a, Vector u) {
  const double a_theta = a.value(theta);
  auto div = [&](const Vector& beta) {
    return a_theta - a.value(beta) - a.gradient(beta).dot(theta - beta);
  };
  u.normalize();
  Vector beta = b.center + b.radius * u;
  double f = div(beta);
  double step = 1.0;
  bool stalled = false;
  for (int it = 0; it < 400 && !stalled; ++it) {
    // d/dbeta D_A(beta || theta) = H(beta) (beta - theta)
    const Vector g = b.radius * (a.hessian(beta) * (beta - theta));
    const Vector gt = g - g.dot(u) * u;
    const double gtn = gt.norm();
    if (gtn <= 1e-12 * (1.0 + g.norm())) break;
    bool moved = false;
    for (int h = 0; h < 60; ++h) {
      const Vector un = (u + (step / gtn) * gt).normalized();
      const Vector bn = b.center + b.radius * un;
      const double fn = div(bn);
      if (fn > f) {
        const double gain = fn - f;
        u = un;
        beta = bn;
        f = fn;
        moved = true;
        step = std::min(2.0 * step, 1.0);
        stalled = gain <= 1e-15 * (1.0 + std::abs(f));
        break;
      }
      step *= 0.5;
      if (step < 1e-14) break;
    }
    if (!moved) break;
  }
  return std::max(0.0, f);
}

}  // namespace

double ante_worst_regret_glm(const Vector& theta, const std::vector<BallRegion>& region, const Cumulant& a) {
  if (region.empty()) throw InputError("ante_worst_regret_glm: empty region");
  if (theta.size() != a.p() || !theta.allFinite()) throw InputError("ante_worst_regret_glm: bad theta");
  const Eigen::Index p = a.p();
  double best = 0.0;
  for (const BallRegion& b : region) {
    check_ball(b);
    if (b.center.size() != p) throw DimensionError("ante_worst_regret_glm: dimension mismatch");
    std::vector<Vector> starts;
    for (Eigen::Index j = 0; j < p; ++j) {
      starts.push_back(Vector::Unit(p, j));
      starts.push_back(-Vector::Unit(p, j));
    }
    Vector away = b.center - theta;
    if (away.norm() < 1e-12) away = Vector::Ones(p);
    starts.push_back(away);
    starts.push_back(-away);
    for (const Vector& s : starts) best = std::max(best, sphere_ascent(theta, b, a, s));
  }
  return best;
}

LmSecondary lm_secondary_metrics(const Vector& theta, const MetaDistribution& meta, double sigma2) {
  check_meta(meta);
  const Eigen::Index p = theta.size();
  const double pd = static_cast<double>(p);
  const Vector shift = meta.shift.size() ? meta.shift : Vector::Zero(p);
  LmSecondary out;
  out.worst_explained_variance = std::numeric_limits<double>::infinity();
  double mean_risk = 0.0;
  for (std::size_t c = 0; c < meta.components.size(); ++c) {
    const BallRegion& b = meta.components[c];
    const Vector cs = b.center - shift;
    const double r = b.radius;
    const double worst_regret = std::pow((theta - cs).norm() + r, 2);
    const double worst_wuv = pd + sigma2 * std::pow(b.center.norm() + r, 2);
    out.worst_risk = std::max(out.worst_risk, worst_regret + worst_wuv);
    // E|u|^2 for u uniform in a p-ball of radius r.
    const double m2 = r * r * pd / (pd + 2.0);
    const double w = meta.weights[static_cast<Eigen::Index>(c)];
    mean_risk += w * ((theta - cs).squaredNorm() + m2 + pd + sigma2 * (b.center.squaredNorm() + m2));
    // min over the ball of |beta|^2 - |theta - beta|^2 = 2 theta^T beta - |theta|^2
    const double ev = 2.0 * theta.dot(cs) - 2.0 * r * theta.norm() - theta.squaredNorm();
    if (w > 0.0) out.worst_explained_variance = std::min(out.worst_explained_variance, ev);
  }
  out.mean_risk = mean_risk;
  return out;
}

Scenario parse_scenario(std::string_view name) {
  if (name == "pi-sweep") return Scenario::pi_sweep;
  if (name == "wuv-sweep") return Scenario::wuv_sweep;
  if (name == "wev-sweep") return Scenario::wev_sweep;
  if (name == "glm-pi-sweep") return Scenario::glm_pi_sweep;
  if (name == "uninformative") return Scenario::uninformative;
  throw InputError("unknown scenario '" + std::string(name) + "'");
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::pi_sweep: return "pi-sweep";
    case Scenario::wuv_sweep: return "wuv-sweep";
    case Scenario::wev_sweep: return "wev-sweep";
    case Scenario::glm_pi_sweep: return "glm-pi-sweep";
    case Scenario::uninformative: return "uninformative";
  }
  return "?";
}

namespace {

bool is_glm(Scenario s) { return s == Scenario::glm_pi_sweep || s == Scenario::uninformative; }

}  // namespace

void set_default_balls(ScenarioConfig& c) {
  BallRegion large{Vector::Constant(c.p, 3.0), 3.0};
  BallRegion small{Vector::Constant(c.p, 3.0), 1.0};
  small.center[0] = 1.0;
  if (is_glm(c.scenario)) {
    c.ball_pi = std::move(small);
    c.ball_rest = std::move(large);
  } else {
    c.ball_pi = std::move(large);
    c.ball_rest = std::move(small);
  }
}

ScenarioConfig default_config(Scenario s) {
  ScenarioConfig c;
  c.scenario = s;
  c.p = is_glm(s) ? 2 : 5;
  set_default_balls(c);
  switch (s) {
    case Scenario::pi_sweep: c.grid = {1.0, 0.8, 0.6, 0.4, 0.2}; break;
    case Scenario::wuv_sweep: c.grid = {0.0, 0.125, 0.25, 0.375, 0.5}; break;
    case Scenario::wev_sweep: c.grid = {0.0, 0.5, 1.0, 1.5, 2.0}; break;
    case Scenario::glm_pi_sweep: c.grid = {0.2, 0.3, 0.4, 0.5}; break;
    case Scenario::uninformative:
      c.grid = {0.0, 1.0};
      c.K = 20;
      c.n = 500;
      break;
  }
  if (is_glm(s)) c.region = EvalRegion::union_of_balls;
  return c;
}

void check_config(const ScenarioConfig& c) {
  if (c.K < 1 || c.n < 1 || c.p < 1 || c.replications < 1)
    throw InputError("scenario config: K, n, p, replications must be positive");
  if (c.n < c.p + 1) throw InputError("scenario config: need n >= p + 1");
  if (c.grid.empty()) throw InputError("scenario config: grid is empty");
  if (!(c.sigma2 >= 0.0)) throw InputError("scenario config: sigma2 must be nonnegative");
  if (c.methods.empty()) throw InputError("scenario config: no methods");
  check_ball(c.ball_pi);
  check_ball(c.ball_rest);
  if (c.ball_pi.center.size() != c.p || c.ball_rest.center.size() != c.p)
    throw DimensionError("scenario config: ball centers must have length p");
  for (double g : c.grid) {
    if (!std::isfinite(g)) throw InputError("scenario config: non-finite grid value");
    switch (c.scenario) {
      case Scenario::pi_sweep:
      case Scenario::glm_pi_sweep:
        if (g < 0.0 || g > 1.0) throw InputError("scenario config: pi must lie in [0, 1]");
        break;
      case Scenario::wuv_sweep:
        if (g < 0.0) throw InputError("scenario config: sigma2 grid must be nonnegative");
        break;
      case Scenario::uninformative:
        if (g != 0.0 && g != 1.0) throw InputError("scenario config: uninformative grid takes 0 or 1");
        break;
      case Scenario::wev_sweep: break;
    }
  }
  if (c.scenario != Scenario::pi_sweep && c.scenario != Scenario::glm_pi_sweep &&
      (c.pi < 0.0 || c.pi > 1.0))
    throw InputError("scenario config: pi must lie in [0, 1]");
  validate_options(c.solver);
}

std::optional<double> ScenarioReport::mean(Method m, double grid_value, std::string_view metric) const {
  for (const AggregateRow& a : aggregates)
    if (a.method == m && a.grid_value == grid_value && a.metric == metric) return a.mean;
  return std::nullopt;
}

int default_thread_count() {
  if (const char* env = std::getenv("MMRKIT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

namespace {

struct CellResult {
  std::vector<MetricRow> rows;
  std::vector<CellError> errors;
};

MetaDistribution meta_for(const ScenarioConfig& c, double pi, double delta) {
  MetaDistribution m;
  m.components = {c.ball_pi, c.ball_rest};
  m.weights = Vector(2);
  m.weights << pi, 1.0 - pi;
  if (delta != 0.0) m.shift = Vector::Constant(c.p, delta);
  return m;
}

std::vector<BallRegion> eval_region(const ScenarioConfig& c, const MetaDistribution& meta) {
  std::vector<BallRegion> r;
  const Vector shift = meta.shift.size() ? meta.shift : Vector::Zero(c.p);
  r.push_back({c.ball_pi.center - shift, c.ball_pi.radius});
  if (c.region == EvalRegion::union_of_balls) r.push_back({c.ball_rest.center - shift, c.ball_rest.radius});
  return r;
}

CellResult run_cell(const ScenarioConfig& c, std::size_t gi, int rep) {
  CellResult out;
  const double gv = c.grid[gi];
  const std::uint64_t tag = static_cast<std::uint64_t>(c.scenario);
  // Streams are keyed by replication, not grid index: every grid value of a
  // replication reuses the same uniforms and normals (common random numbers),
  // so a wev-sweep shifts the very same coefficients.
  const std::uint64_t rep_key = static_cast<std::uint64_t>(rep);
  const std::uint64_t meta_seed = stream_key(c.seed, {tag, rep_key, 1});
  const std::uint64_t data_seed = stream_key(c.seed, {tag, rep_key, 2});

  double pi = c.pi, sigma2 = c.sigma2, delta = c.delta;
  if (c.scenario == Scenario::pi_sweep || c.scenario == Scenario::glm_pi_sweep) pi = gv;
  if (c.scenario == Scenario::wuv_sweep) sigma2 = gv;
  if (c.scenario == Scenario::wev_sweep) delta = gv;
  const MetaDistribution meta = meta_for(c, pi, delta);
  const std::vector<BallRegion> region = eval_region(c, meta);

  GroupedDataset data;
  LossSpec loss = LossSpec::square();
  std::optional<GaussianDesignCumulant> cumulant;
  try {
    const std::vector<Vector> betas = sample_meta(meta, c.K, meta_seed);
    if (is_glm(c.scenario)) {
      loss = LossSpec::glm(GlmFamily(FamilyTag::logistic));
      cumulant.emplace(Vector::Constant(c.p, c.x_mean), GlmFamily(FamilyTag::logistic));
      data = gen_logit_data(betas, c.n, data_seed, c.x_mean);
      if (c.scenario == Scenario::uninformative && gv == 1.0)
        data = data.with(gen_uninformative_group(c.n, c.p, stream_key(data_seed, {3}), c.x_mean));
    } else {
      // WUVs follow the unshifted coefficients so that the shift moves only the WEVs.
      Vector var(c.K);
      const Vector shift = meta.shift.size() ? meta.shift : Vector::Zero(c.p);
      for (int k = 0; k < c.K; ++k)
        var[k] = static_cast<double>(c.p) + sigma2 * (betas[static_cast<std::size_t>(k)] + shift).squaredNorm();
      data = gen_lm_data(betas, var, c.n, data_seed);
    }
  } catch (const Error& e) {
    out.errors.push_back({gv, rep, "", e.what()});
    return out;
  }

  std::vector<LocalFit> fits;
  try {
    fits = group_summaries(data, loss);
  } catch (const Error& e) {
    out.errors.push_back({gv, rep, "", std::string("local fits: ") + e.what()});
    return out;
  }

  for (Method m : c.methods) {
    try {
      FitResult fr;
      switch (m) {
        case Method::mmr: fr = fit_mmr(data, fits, loss, c.solver); break;
        case Method::gdro: fr = fit_gdro(data, fits, loss, c.solver); break;
        case Method::mmv: fr = fit_mmv(data, fits, loss, c.solver); break;
        case Method::pooled: fr = fit_pooled(data, loss); break;
      }
      if (!fr.converged)
        out.errors.push_back({gv, rep, std::string(method_name(m)),
                              "not converged, gap " + std::to_string(fr.gap) + " (metrics kept)"});
      if (cumulant) {
        out.rows.push_back({gv, rep, m, "worst_regret", ante_worst_regret_glm(fr.theta_hat, region, *cumulant)});
      } else {
        out.rows.push_back({gv, rep, m, "worst_regret", ante_worst_regret_lm(fr.theta_hat, region)});
        const LmSecondary s = lm_secondary_metrics(fr.theta_hat, meta, sigma2);
        out.rows.push_back({gv, rep, m, "worst_risk", s.worst_risk});
        out.rows.push_back({gv, rep, m, "mean_risk", s.mean_risk});
        out.rows.push_back({gv, rep, m, "worst_explained_variance", s.worst_explained_variance});
      }
    } catch (const Error& e) {
      out.errors.push_back({gv, rep, std::string(method_name(m)), e.what()});
    }
  }
  return out;
}

}  // namespace

ScenarioReport run_scenario(const ScenarioConfig& config) {
  check_config(config);
  const std::size_t G = config.grid.size();
  const std::size_t R = static_cast<std::size_t>(config.replications);
  const std::size_t cells = G * R;
  std::vector<CellResult> results(cells);

  const int nthreads = static_cast<int>(
      std::min<std::size_t>(cells, static_cast<std::size_t>(config.threads > 0 ? config.threads
                                                                               : default_thread_count())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells;)
      results[i] = run_cell(config, i / R, static_cast<int>(i % R));
  };
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  ScenarioReport rep;
  rep.config = config;
  for (CellResult& r : results) {
    for (MetricRow& m : r.rows) rep.rows.push_back(std::move(m));
    for (CellError& e : r.errors) rep.errors.push_back(std::move(e));
  }

  // Aggregate over replications in (grid, method, metric) order.
  std::map<std::tuple<std::size_t, int, std::string>, std::vector<double>> groups;
  for (const MetricRow& m : rep.rows) {
    const std::size_t gi =
        static_cast<std::size_t>(std::find(config.grid.begin(), config.grid.end(), m.grid_value) -
                                 config.grid.begin());
    groups[{gi, static_cast<int>(m.method), m.metric}].push_back(m.value);
  }
  for (auto& [key, vals] : groups) {
    AggregateRow a;
    a.grid_value = config.grid[std::get<0>(key)];
    a.method = static_cast<Method>(std::get<1>(key));
    a.metric = std::get<2>(key);
    a.count = static_cast<int>(vals.size());
    a.mean = pairwise_sum(vals.data(), vals.size()) / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      std::vector<double> sq(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) sq[i] = (vals[i] - a.mean) * (vals[i] - a.mean);
      const double var = pairwise_sum(sq.data(), sq.size()) / static_cast<double>(vals.size() - 1);
      a.se = std::sqrt(var / static_cast<double>(vals.size()));
    }
    rep.aggregates.push_back(std::move(a));
  }
  return rep;
}

}  // namespace mmr
