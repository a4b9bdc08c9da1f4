#include "mmrkit/robust_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "mmrkit/error.hpp"

namespace mmr {

Method parse_method(std::string_view name) {
  if (name == "mmr") return Method::mmr;
  if (name == "gdro") return Method::gdro;
  if (name == "pooled") return Method::pooled;
  if (name == "mmv") return Method::mmv;
  throw InputError("unknown method '" + std::string(name) + "'");
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::mmr: return "mmr";
    case Method::gdro: return "gdro";
    case Method::pooled: return "pooled";
    case Method::mmv: return "mmv";
  }
  return "unknown";
}

void validate_options(const SolverOptions& opts) {
  if (opts.L && !(*opts.L > 0.0)) throw InputError("linearization constant L must be positive");
  if (!(opts.gap_tol > 0.0)) throw InputError("gap_tol must be positive");
  if (opts.T_max < 1) throw InputError("T_max must be at least 1");
}

namespace {

// The K functions f_k minimized in max-form by the linearization method.
class GroupObjectives {
 public:
  virtual ~GroupObjectives() = default;
  virtual std::size_t K() const = 0;
  virtual Eigen::Index p() const = 0;
  // values (K) and gradients as columns of a p x K matrix.
  virtual void eval(const Vector& theta, Vector& f, Matrix& G) const = 0;
  // Per-group Hessians when the f_k are convex; empty otherwise.
  virtual std::vector<Matrix> hessians(const Vector& theta) const = 0;
};

// f_k(theta) = |theta - beta_k|^2_{S_k} + c_k (square-loss regret, risk, -V).
class QuadraticObjectives final : public GroupObjectives {
 public:
  QuadraticObjectives(const std::vector<LocalFit>& fits, Vector offsets)
      : fits_(fits), offsets_(std::move(offsets)) {}
  std::size_t K() const override { return fits_.size(); }
  Eigen::Index p() const override { return fits_.front().beta_hat.size(); }
  void eval(const Vector& theta, Vector& f, Matrix& G) const override {
    f.resize(static_cast<Eigen::Index>(K()));
    G.resize(p(), static_cast<Eigen::Index>(K()));
    for (std::size_t k = 0; k < K(); ++k) {
      const Vector d = theta - fits_[k].beta_hat;
      const Vector sd = fits_[k].sigma_mat.matrix() * d;
      f[static_cast<Eigen::Index>(k)] = d.dot(sd) + offsets_[static_cast<Eigen::Index>(k)];
      G.col(static_cast<Eigen::Index>(k)) = 2.0 * sd;
    }
  }
  std::vector<Matrix> hessians(const Vector&) const override {
    std::vector<Matrix> h;
    for (const LocalFit& f : fits_) h.push_back(2.0 * f.sigma_mat.matrix());
    return h;
  }

 private:
  const std::vector<LocalFit>& fits_;
  Vector offsets_;
};

// GLM risk minus an offset per group (wmr for regret, 0 for risk).
class GlmRiskObjectives final : public GroupObjectives {
 public:
  GlmRiskObjectives(const GroupedDataset& data, LossSpec loss, Vector offsets)
      : data_(data), loss_(std::move(loss)), offsets_(std::move(offsets)) {}
  std::size_t K() const override { return data_.K(); }
  Eigen::Index p() const override { return data_.p(); }
  void eval(const Vector& theta, Vector& f, Matrix& G) const override {
    f.resize(static_cast<Eigen::Index>(K()));
    G.resize(p(), static_cast<Eigen::Index>(K()));
    for (std::size_t k = 0; k < K(); ++k) {
      RiskEval r = empirical_risk(data_.group(k), loss_, theta, false);
      f[static_cast<Eigen::Index>(k)] = r.value - offsets_[static_cast<Eigen::Index>(k)];
      G.col(static_cast<Eigen::Index>(k)) = r.gradient;
    }
  }
  std::vector<Matrix> hessians(const Vector& theta) const override {
    std::vector<Matrix> h;
    for (const GroupSample& g : data_.groups())
      h.push_back(*empirical_risk(g, loss_, theta, true).hessian);
    return h;
  }

 private:
  const GroupedDataset& data_;
  LossSpec loss_;
  Vector offsets_;
};

// -V_k(theta) = -Var(y_k) + n^-1 sum (y - A'(x^T theta))^2.
class MmvGlmObjectives final : public GroupObjectives {
 public:
  MmvGlmObjectives(const GroupedDataset& data, GlmFamily fam) : data_(data), fam_(fam) {
    var_.resize(static_cast<Eigen::Index>(data.K()));
    for (std::size_t k = 0; k < data.K(); ++k) {
      const Vector& y = data.group(k).y;
      const double m = y.mean();
      var_[static_cast<Eigen::Index>(k)] = (y.array() - m).square().mean();
    }
  }
  std::size_t K() const override { return data_.K(); }
  Eigen::Index p() const override { return data_.p(); }
  void eval(const Vector& theta, Vector& f, Matrix& G) const override {
    f.resize(static_cast<Eigen::Index>(K()));
    G.resize(p(), static_cast<Eigen::Index>(K()));
    for (std::size_t k = 0; k < K(); ++k) {
      const GroupSample& g = data_.group(k);
      const Vector eta = g.X * theta;
      Vector w(g.n());
      double sse = 0.0;
      for (Eigen::Index i = 0; i < g.n(); ++i) {
        const double r = g.y[i] - fam_.mean(eta[i]);
        sse += r * r;
        w[i] = -2.0 * r * fam_.variance(eta[i]);
      }
      const double inv_n = 1.0 / static_cast<double>(g.n());
      f[static_cast<Eigen::Index>(k)] = sse * inv_n - var_[static_cast<Eigen::Index>(k)];
      G.col(static_cast<Eigen::Index>(k)) = g.X.transpose() * w * inv_n;
    }
  }
  std::vector<Matrix> hessians(const Vector&) const override { return {}; }
  double explained_variance_floor(const Vector& f) const { return -f.maxCoeff(); }

 private:
  const GroupedDataset& data_;
  GlmFamily fam_;
  Vector var_;
};

struct EngineResult {
  Vector theta;
  Vector gamma;
  Vector f;
  double gap = 0.0;
  double L = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<TraceEntry> trace;
  std::vector<Vector> iterates;
};

struct QpStep {
  Vector gamma;
  double qp_value = 0.0;
};

QpStep solve_linearized(const Vector& f, const Matrix& G, double L) {
  const SymMatrix H = SymMatrix::symmetrized(G.transpose() * G / L);
  SimplexQpResult qp = solve_simplex_qp(f, H);
  return {qp.weights, qp.objective};
}

double duality_gap(const GroupObjectives& obj, const Vector& theta, const Vector& f,
                   const Matrix& G, const QpStep& qp) {
  const double primal = f.maxCoeff();
  const std::vector<Matrix> hs = obj.hessians(theta);
  if (!hs.empty()) {
    Matrix hbar = Matrix::Zero(obj.p(), obj.p());
    for (std::size_t k = 0; k < hs.size(); ++k) hbar += qp.gamma[static_cast<Eigen::Index>(k)] * hs[k];
    const Vector gbar = G * qp.gamma;
    try {
      const Vector step = spd_solve(SymMatrix::symmetrized(hbar), gbar);
      const double dual = qp.gamma.dot(f) - 0.5 * gbar.dot(step);
      return std::max(0.0, primal - dual);
    } catch (const SingularityError&) {
      // fall through to the stationarity measure
    }
  }
  return std::max(0.0, primal - qp.qp_value);
}

EngineResult linearized_minmax(const GroupObjectives& obj, Vector theta, double L,
                               bool adaptive_L, const SolverOptions& opts) {
  EngineResult res;
  Vector f;
  Matrix G;
  obj.eval(theta, f, G);
  if (!f.allFinite()) throw InputError("non-finite objective at the starting point");
  if (opts.record_iterates) res.iterates.push_back(theta);

  QpStep qp;
  int t = 0;
  bool have_qp = false;
  while (t < opts.T_max) {
    qp = solve_linearized(f, G, L);
    have_qp = true;
    const double gap = duality_gap(obj, theta, f, G, qp);
    res.gap = gap;
    if (gap <= opts.gap_tol) {
      res.converged = true;
      break;
    }
    const Vector delta = -(G * qp.gamma) / L;
    const Vector next = theta + delta;
    Vector f_next;
    Matrix G_next;
    obj.eval(next, f_next, G_next);
    if (!f_next.allFinite()) throw InputError("non-finite objective during iteration");

    if (adaptive_L) {
      const double half_sq = 0.5 * delta.squaredNorm();
      bool violated = false;
      for (Eigen::Index k = 0; k < f.size(); ++k) {
        const double model = f[k] + G.col(k).dot(delta) + L * half_sq;
        if (f_next[k] > model + 1e-12 * (1.0 + std::abs(f[k]))) violated = true;
      }
      if (violated) {
        L *= 2.0;
        ++t;
        continue;
      }
    }

    ++t;
    res.trace.push_back({t, f.maxCoeff(), gap, delta.norm(), L});
    theta = next;
    f = std::move(f_next);
    G = std::move(G_next);
    have_qp = false;
    if (opts.record_iterates) res.iterates.push_back(theta);
    if (delta.norm() <= 1e-15 * (1.0 + theta.norm())) {
      // No further progress representable in double precision.
      qp = solve_linearized(f, G, L);
      have_qp = true;
      res.gap = duality_gap(obj, theta, f, G, qp);
      res.converged = res.gap <= opts.gap_tol;
      break;
    }
  }
  if (!have_qp) {
    qp = solve_linearized(f, G, L);
    res.gap = duality_gap(obj, theta, f, G, qp);
    res.converged = res.gap <= opts.gap_tol;
  }
  res.theta = std::move(theta);
  res.gamma = qp.gamma;
  res.f = std::move(f);
  res.L = L;
  res.iterations = t;
  return res;
}

// Newton on the KKT system of min t s.t. f_k(theta) <= t over the groups that
// carry weight. The first-order engine stalls near sqrt(machine epsilon) in
// theta; a few Newton steps recover full precision. Runs only after
// convergence and is rejected when the active set changes or the maximum rises.
void polish_kkt(const GroupObjectives& obj, EngineResult& res) {
  if (!res.converged || obj.hessians(res.theta).empty()) return;
  std::vector<Eigen::Index> S;
  for (Eigen::Index k = 0; k < res.gamma.size(); ++k)
    if (res.gamma[k] > 1e-10) S.push_back(k);
  const Eigen::Index p = obj.p();
  const auto s = static_cast<Eigen::Index>(S.size());
  if (s == 0) return;

  Vector theta = res.theta;
  Vector gs(s);
  for (Eigen::Index i = 0; i < s; ++i) gs[i] = res.gamma[S[i]];
  gs /= gs.sum();
  Vector f = res.f;
  Matrix G;
  obj.eval(theta, f, G);
  double t = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) t += gs[i] * f[S[i]];

  const Eigen::Index n = p + s + 1;
  for (int it = 0; it < 8; ++it) {
    const std::vector<Matrix> hs = obj.hessians(theta);
    Matrix J = Matrix::Zero(n, n);
    Vector r = Vector::Zero(n);
    for (Eigen::Index i = 0; i < s; ++i) {
      const Eigen::Index k = S[i];
      J.topLeftCorner(p, p) += gs[i] * hs[static_cast<std::size_t>(k)];
      J.block(0, p + i, p, 1) = G.col(k);
      J.block(p + i, 0, 1, p) = G.col(k).transpose();
      J(p + i, n - 1) = -1.0;
      J(n - 1, p + i) = 1.0;
      r.head(p) += gs[i] * G.col(k);
      r[p + i] = f[k] - t;
    }
    r[n - 1] = gs.sum() - 1.0;
    const Vector step = J.completeOrthogonalDecomposition().solve(-r);
    if (!step.allFinite()) return;
    theta += step.head(p);
    gs += step.segment(p, s);
    t += step[n - 1];
    obj.eval(theta, f, G);
    if (!f.allFinite()) return;
    if (step.norm() <= 1e-15 * (1.0 + theta.norm())) break;
  }

  const double old_max = res.f.maxCoeff();
  const double eps = std::numeric_limits<double>::epsilon();
  if (gs.minCoeff() < -1e-12) return;
  if (f.maxCoeff() > old_max + 4.0 * eps * (1.0 + std::abs(old_max))) return;
  for (Eigen::Index k = 0; k < f.size(); ++k) {
    const bool active = std::find(S.begin(), S.end(), k) != S.end();
    if (!active && f[k] > t + 1e-12 * (1.0 + std::abs(t))) return;
  }
  Vector gamma = Vector::Zero(res.gamma.size());
  for (Eigen::Index i = 0; i < s; ++i) gamma[S[i]] = std::max(0.0, gs[i]);
  gamma /= gamma.sum();
  QpStep qp = solve_linearized(f, G, res.L);
  const double gap_qp = duality_gap(obj, theta, f, G, qp);
  qp.gamma = gamma;
  const double gap_kkt = duality_gap(obj, theta, f, G, qp);
  res.theta = std::move(theta);
  res.f = std::move(f);
  res.gamma = std::move(gamma);
  res.gap = std::min(gap_qp, gap_kkt);
}

Vector offsets_of(const std::vector<LocalFit>& fits, double (*pick)(const LocalFit&)) {
  Vector v(static_cast<Eigen::Index>(fits.size()));
  for (std::size_t k = 0; k < fits.size(); ++k) v[static_cast<Eigen::Index>(k)] = pick(fits[k]);
  return v;
}

void check_fits(const GroupedDataset& data, const std::vector<LocalFit>& fits, const LossSpec& loss) {
  if (fits.size() != data.K()) throw InputError("local fits do not match the dataset");
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].group_id != data.group(k).group_id)
      throw InputError("local fit '" + fits[k].group_id + "' does not match group '" +
                       data.group(k).group_id + "'");
    if (!(fits[k].loss == loss))
      throw InputError("local fit for '" + fits[k].group_id + "' used a different loss");
  }
}

Vector pooled_theta(const GroupedDataset& data, const LossSpec& loss) {
  const GroupSample pooled = data.pooled();
  if (loss.is_square()) return least_squares(pooled).beta_hat;
  return glm_newton(pooled, loss.family()).beta_hat;
}

double max_sigma_eig(const std::vector<LocalFit>& fits) {
  double m = 0.0;
  for (const LocalFit& f : fits) m = std::max(m, max_eigenvalue(f.sigma_mat));
  return m;
}

FitResult finish(Method method, const LossSpec& loss, const EngineResult& er,
                 const std::vector<LocalFit>& fits, const GroupedDataset& data) {
  FitResult out;
  out.method = method;
  out.loss = loss;
  out.theta_hat = er.theta;
  out.gamma_hat = er.gamma;
  out.per_group_regret = per_group_regrets(er.theta, fits, data, loss);
  out.objective = er.f.maxCoeff();
  out.gap = er.gap;
  out.converged = er.converged;
  out.iterations = er.iterations;
  out.L = er.L;
  out.trace = er.trace;
  out.iterates = er.iterates;
  return out;
}

enum class Criterion { regret, risk };

FitResult fit_minmax(Method method, Criterion crit, const GroupedDataset& data,
                     const std::vector<LocalFit>& fits, const LossSpec& loss,
                     const SolverOptions& opts) {
  validate_options(opts);
  check_fits(data, fits, loss);
  Vector theta0 = opts.init ? *opts.init : pooled_theta(data, loss);
  if (theta0.size() != data.p()) throw DimensionError("initial theta has the wrong length");

  std::unique_ptr<GroupObjectives> obj;
  double L = 0.0;
  bool adaptive = false;
  if (loss.is_square()) {
    Vector off = crit == Criterion::regret ? Vector::Zero(static_cast<Eigen::Index>(fits.size()))
                                           : offsets_of(fits, [](const LocalFit& f) { return f.wuv; });
    obj = std::make_unique<QuadraticObjectives>(fits, std::move(off));
    L = opts.L ? *opts.L : 2.0 * max_sigma_eig(fits);
  } else {
    Vector off = crit == Criterion::regret ? offsets_of(fits, [](const LocalFit& f) { return f.wmr; })
                                           : Vector::Zero(static_cast<Eigen::Index>(fits.size()));
    obj = std::make_unique<GlmRiskObjectives>(data, loss, std::move(off));
    L = opts.L ? *opts.L : estimate_lipschitz(data, fits, loss, theta0);
    adaptive = true;
  }
  EngineResult er = linearized_minmax(*obj, theta0, L, adaptive, opts);
  polish_kkt(*obj, er);
  return finish(method, loss, er, fits, data);
}

}  // namespace

Vector per_group_regrets(const Vector& theta, const std::vector<LocalFit>& fits,
                         const GroupedDataset& data, const LossSpec& loss) {
  check_fits(data, fits, loss);
  Vector r(static_cast<Eigen::Index>(fits.size()));
  for (std::size_t k = 0; k < fits.size(); ++k)
    r[static_cast<Eigen::Index>(k)] = empirical_regret(theta, fits[k], data.group(k), loss).regret;
  return r;
}

double worst_empirical_regret(const Vector& theta, const std::vector<LocalFit>& fits,
                              const GroupedDataset& data, const LossSpec& loss) {
  return per_group_regrets(theta, fits, data, loss).maxCoeff();
}

double estimate_lipschitz(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                          const LossSpec& loss, const Vector& center, double radius) {
  if (loss.is_square()) return 2.0 * max_sigma_eig(fits);
  std::vector<Vector> probes{center};
  if (radius > 0.0) {
    for (Eigen::Index j = 0; j < center.size(); ++j) {
      Vector e = Vector::Zero(center.size());
      e[j] = radius;
      probes.push_back(center + e);
      probes.push_back(center - e);
    }
  }
  double top = 0.0;
  for (const Vector& th : probes)
    for (const GroupSample& g : data.groups()) {
      const RiskEval r = empirical_risk(g, loss, th, true);
      top = std::max(top, max_eigenvalue(SymMatrix::symmetrized(*r.hessian)));
    }
  return 1.1 * top;
}

FitResult fit_mmr(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                  const LossSpec& loss, const SolverOptions& opts) {
  return fit_minmax(Method::mmr, Criterion::regret, data, fits, loss, opts);
}

FitResult fit_gdro(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                   const LossSpec& loss, const SolverOptions& opts) {
  return fit_minmax(Method::gdro, Criterion::risk, data, fits, loss, opts);
}

FitResult fit_mmr(const GroupedDataset& data, const LossSpec& loss, const SolverOptions& opts) {
  validate_options(opts);
  return fit_mmr(data, group_summaries(data, loss), loss, opts);
}

FitResult fit_gdro(const GroupedDataset& data, const LossSpec& loss, const SolverOptions& opts) {
  validate_options(opts);
  return fit_gdro(data, group_summaries(data, loss), loss, opts);
}

FitResult fit_pooled(const GroupedDataset& data, const LossSpec& loss) {
  const std::vector<LocalFit> fits = group_summaries(data, loss);
  const GroupSample pooled = data.pooled();
  const LocalFit pf = loss.is_square() ? least_squares(pooled) : glm_newton(pooled, loss.family());
  FitResult out;
  out.method = Method::pooled;
  out.loss = loss;
  out.theta_hat = pf.beta_hat;
  Vector w(static_cast<Eigen::Index>(data.K()));
  for (std::size_t k = 0; k < data.K(); ++k)
    w[static_cast<Eigen::Index>(k)] =
        static_cast<double>(data.group(k).n()) / static_cast<double>(data.total_n());
  out.implicit_weights = w;
  out.per_group_regret = per_group_regrets(pf.beta_hat, fits, data, loss);
  out.objective = pf.wmr;
  out.converged = true;
  return out;
}

FitResult fit_mmv(const GroupedDataset& data, const std::vector<LocalFit>& fits,
                  const LossSpec& loss, const SolverOptions& opts) {
  validate_options(opts);
  check_fits(data, fits, loss);
  const bool quadratic = loss.is_square() || loss.family().tag() == FamilyTag::gaussian;

  if (quadratic) {
    // -V_k = regret_k - wev_k under the square loss.
    std::vector<LocalFit> sq;
    if (loss.is_square()) {
      sq = fits;
    } else {
      for (const GroupSample& g : data.groups()) sq.push_back(least_squares(g));
    }
    Vector off = -offsets_of(sq, [](const LocalFit& f) { return f.wev; });
    QuadraticObjectives obj(sq, std::move(off));
    Vector theta0 = opts.init ? *opts.init : pooled_theta(data, LossSpec::square());
    const double L = opts.L ? *opts.L : 2.0 * max_sigma_eig(sq);
    const EngineResult er = linearized_minmax(obj, theta0, L, false, opts);
    FitResult out = finish(Method::mmv, loss, er, fits, data);
    out.objective = -er.f.maxCoeff();
    return out;
  }

  if (loss.family().tag() != FamilyTag::logistic)
    throw InputError("MMV is defined for the square loss and logistic regression only");

  MmvGlmObjectives obj(data, loss.family());
  std::vector<Vector> starts;
  starts.push_back(Vector::Zero(data.p()));
  starts.push_back(pooled_theta(data, loss));
  for (const LocalFit& f : fits) starts.push_back(f.beta_hat);
  if (opts.init) starts.insert(starts.begin(), *opts.init);

  // Global curvature bound for the logistic criterion:
  // |d^2/deta^2 (y - A'(eta))^2| <= 2 (max A''^2 + max|A'''|) = 2 (1/16 + 1/(6 sqrt 3)).
  const double L0 = opts.L ? *opts.L
                           : 2.0 * (1.0 / 16.0 + 1.0 / (6.0 * std::sqrt(3.0))) * max_sigma_eig(fits);

  std::optional<EngineResult> best;
  for (const Vector& s : starts) {
    try {
      EngineResult er = linearized_minmax(obj, s, L0, true, opts);
      if (!er.f.allFinite()) continue;
      if (!best || er.f.maxCoeff() < best->f.maxCoeff()) best = std::move(er);
    } catch (const InputError&) {
      continue;
    }
  }
  if (!best) throw ConvergenceError("MMV: every multistart branch failed");
  FitResult out = finish(Method::mmv, loss, *best, fits, data);
  out.objective = -best->f.maxCoeff();
  return out;
}

FitResult fit_mmv(const GroupedDataset& data, const LossSpec& loss, const SolverOptions& opts) {
  validate_options(opts);
  return fit_mmv(data, group_summaries(data, loss), loss, opts);
}

FitResult fit_method(Method m, const GroupedDataset& data, const LossSpec& loss,
                     const SolverOptions& opts) {
  switch (m) {
    case Method::mmr: return fit_mmr(data, loss, opts);
    case Method::gdro: return fit_gdro(data, loss, opts);
    case Method::pooled: return fit_pooled(data, loss);
    case Method::mmv: return fit_mmv(data, loss, opts);
  }
  throw InputError("unknown method");
}

}  // namespace mmr
