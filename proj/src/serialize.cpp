#include "mmrkit/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "mmrkit/error.hpp"

namespace mmr {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vector_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw InputError(std::string(what) + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError(std::string(what) + ": element " + std::to_string(i) + " is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

namespace {

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

Matrix matrix_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw InputError(std::string(what) + ": expected a nonempty array of rows");
  const Eigen::Index r = static_cast<Eigen::Index>(j.size());
  Matrix m(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    const Vector row = vector_from_json(j[static_cast<std::size_t>(i)], what);
    if (row.size() != r) throw DimensionError(std::string(what) + ": matrix must be square");
    m.row(i) = row.transpose();
  }
  return m;
}

const Json& field(const Json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key)) throw InputError(std::string(where) + ": missing field '" + key + "'");
  return j.at(key);
}

double number(const Json& j, const char* key, const char* where) {
  const Json& v = field(j, key, where);
  if (!v.is_number()) throw InputError(std::string(where) + ": field '" + key + "' must be a number");
  return v.get<double>();
}

int integer(const Json& v, const char* key) {
  if (!v.is_number_integer()) throw InputError(std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* where) {
  const std::set<std::string> k(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!k.count(it.key())) throw InputError(std::string(where) + ": unknown field '" + it.key() + "'");
}

Json labeled(const Vector& v, const std::vector<std::string>& ids) {
  Json o = Json::object();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    const std::string id = static_cast<std::size_t>(k) < ids.size() ? ids[static_cast<std::size_t>(k)] : std::to_string(k);
    o[id] = v[k];
  }
  return o;
}

Json index_list(const std::vector<std::size_t>& idx, const std::vector<std::string>& ids) {
  Json a = Json::array();
  for (std::size_t k : idx) a.push_back(k < ids.size() ? ids[k] : std::to_string(k));
  return a;
}

}  // namespace

Json to_json(const ValidationReport& r) {
  Json j;
  j["ok"] = r.ok();
  Json groups = Json::array();
  for (const GroupValidation& g : r.groups) {
    Json x;
    x["group"] = g.group_id;
    x["n"] = g.n;
    x["p"] = g.p;
    x["rank"] = g.rank;
    x["flags"] = g.flags;
    groups.push_back(std::move(x));
  }
  j["groups"] = std::move(groups);
  return j;
}

Json to_json(const LocalFit& f) {
  Json j;
  j["group"] = f.group_id;
  j["loss"] = f.loss.name();
  j["n"] = f.n;
  j["beta_hat"] = to_json(f.beta_hat);
  j["sigma"] = matrix_json(f.sigma_mat.matrix());
  j["mu_hat"] = to_json(f.mu_hat);
  j["wmr"] = f.wmr;
  j["wuv"] = f.wuv;
  j["wev"] = f.wev;
  return j;
}

LocalFit local_fit_from_json(const Json& j) {
  const char* where = "summary";
  reject_unknown(j, {"group", "loss", "n", "beta_hat", "sigma", "mu_hat", "wmr", "wuv", "wev"}, where);
  LocalFit f;
  const Json& g = field(j, "group", where);
  if (!g.is_string()) throw InputError("summary: 'group' must be a string");
  f.group_id = g.get<std::string>();
  f.loss = j.contains("loss") ? LossSpec::parse(j.at("loss").get<std::string>()) : LossSpec::square();
  f.n = integer(field(j, "n", where), "n");
  f.beta_hat = vector_from_json(field(j, "beta_hat", where), "beta_hat");
  f.sigma_mat = SymMatrix(matrix_from_json(field(j, "sigma", where), "sigma"));
  if (f.sigma_mat.dim() != f.beta_hat.size()) throw DimensionError("summary '" + f.group_id + "': sigma and beta_hat disagree on p");
  f.mu_hat = j.contains("mu_hat") ? vector_from_json(j.at("mu_hat"), "mu_hat") : f.sigma_mat.matrix() * f.beta_hat;
  f.wuv = number(j, "wuv", where);
  f.wmr = j.contains("wmr") ? number(j, "wmr", where) : f.wuv;
  f.wev = j.contains("wev") ? number(j, "wev", where) : f.sigma_mat.quad(f.beta_hat);
  return f;
}

Json summaries_to_json(const std::vector<LocalFit>& fits) {
  Json a = Json::array();
  for (const LocalFit& f : fits) a.push_back(to_json(f));
  Json j;
  j["groups"] = std::move(a);
  return j;
}

std::vector<LocalFit> summaries_from_json(const Json& j) {
  const Json& a = field(j, "groups", "summaries");
  if (!a.is_array() || a.empty()) throw InputError("summaries: 'groups' must be a nonempty array");
  std::vector<LocalFit> out;
  for (const Json& g : a) out.push_back(local_fit_from_json(g));
  return out;
}

Json to_json(const FitResult& r, const std::vector<std::string>& ids, bool with_trace) {
  Json j;
  j["method"] = std::string(method_name(r.method));
  j["loss"] = r.loss.name();
  j["theta_hat"] = to_json(r.theta_hat);
  j["gamma_hat"] = r.gamma_hat ? to_json(*r.gamma_hat) : Json(nullptr);
  j["implicit_weights"] = r.implicit_weights ? to_json(*r.implicit_weights) : Json(nullptr);
  j["groups"] = ids;
  j["per_group_regret"] = labeled(r.per_group_regret, ids);
  j["objective"] = r.objective;
  j["gap"] = r.gap;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["L"] = r.L;
  if (with_trace) {
    Json t = Json::array();
    for (const TraceEntry& e : r.trace)
      t.push_back({{"iteration", e.iteration}, {"objective", e.objective}, {"gap", e.gap},
                   {"step_norm", e.step_norm}, {"L", e.L}});
    j["trace"] = std::move(t);
  }
  return j;
}

SolverOptions solver_options_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("solver options must be a JSON object");
  reject_unknown(j, {"L", "T_max", "gap_tol", "init", "record_iterates"}, "solver options");
  SolverOptions o;
  if (j.contains("L") && !j.at("L").is_null()) o.L = number(j, "L", "solver options");
  if (j.contains("T_max")) o.T_max = integer(j.at("T_max"), "T_max");
  if (j.contains("gap_tol")) o.gap_tol = number(j, "gap_tol", "solver options");
  if (j.contains("init") && !j.at("init").is_null()) o.init = vector_from_json(j.at("init"), "init");
  if (j.contains("record_iterates")) o.record_iterates = j.at("record_iterates").get<bool>();
  validate_options(o);
  return o;
}

Json to_json(const DualSolution& d, const std::vector<std::string>& ids) {
  Json j;
  j["kind"] = std::string(dual_kind_name(d.kind));
  j["groups"] = ids;
  j["gamma_star"] = to_json(d.gamma_star);
  j["center"] = to_json(d.center);
  j["theta_star"] = to_json(d.theta_star);
  j["radius_sq"] = d.radius_sq;
  j["supporting_set"] = index_list(d.supporting_set, ids);
  j["positive_weight_set"] = index_list(d.positive_weight_set, ids);
  j["slacks"] = to_json(d.slacks);
  j["iterations"] = d.iterations;
  return j;
}

Json to_json(const DegenerationReport& r, const std::vector<std::string>& ids) {
  auto opt_id = [&](const std::optional<std::size_t>& k) {
    return k ? Json(*k < ids.size() ? ids[*k] : std::to_string(*k)) : Json(nullptr);
  };
  Json j;
  j["gdro_degenerates_to"] = opt_id(r.gdro_group);
  j["mmv_degenerates_to"] = opt_id(r.mmv_group);
  j["mmr_homogeneous"] = r.mmr_homogeneous;
  j["max_pairwise_distance"] = r.max_pairwise_distance;
  j["gdro_margin"] = labeled(r.gdro_margin, ids);
  j["mmv_margin"] = labeled(r.mmv_margin, ids);
  return j;
}

namespace {

Json ball_json(const BallRegion& b) { return {{"center", to_json(b.center)}, {"radius", b.radius}}; }

BallRegion ball_from_json(const Json& j, const char* what) {
  reject_unknown(j, {"center", "radius"}, what);
  BallRegion b;
  b.center = vector_from_json(field(j, "center", what), what);
  b.radius = number(j, "radius", what);
  return b;
}

}  // namespace

Json to_json(const ScenarioConfig& c) {
  Json j;
  j["scenario"] = std::string(scenario_name(c.scenario));
  j["K"] = c.K;
  j["n"] = c.n;
  j["p"] = c.p;
  j["sigma2"] = c.sigma2;
  j["pi"] = c.pi;
  j["delta"] = c.delta;
  j["grid"] = c.grid;
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  j["ball_pi"] = ball_json(c.ball_pi);
  j["ball_rest"] = ball_json(c.ball_rest);
  j["region"] = c.region == EvalRegion::pi_ball ? "pi_ball" : "union";
  j["x_mean"] = c.x_mean;
  Json m = Json::array();
  for (Method x : c.methods) m.push_back(std::string(method_name(x)));
  j["methods"] = std::move(m);
  Json s;
  s["L"] = c.solver.L ? Json(*c.solver.L) : Json(nullptr);
  s["T_max"] = c.solver.T_max;
  s["gap_tol"] = c.solver.gap_tol;
  j["solver"] = std::move(s);
  j["threads"] = c.threads;
  return j;
}

ScenarioConfig scenario_config_from_json(const Json& j) {
  const char* where = "scenario config";
  if (!j.is_object()) throw InputError("scenario config must be a JSON object");
  reject_unknown(j, {"scenario", "K", "n", "p", "sigma2", "pi", "delta", "grid", "replications", "seed",
                     "ball_pi", "ball_rest", "region", "x_mean", "methods", "solver", "threads"},
                 where);
  const Json& tag = field(j, "scenario", where);
  if (!tag.is_string()) throw InputError("scenario config: 'scenario' must be a string");
  ScenarioConfig c = default_config(parse_scenario(tag.get<std::string>()));
  if (j.contains("p")) {
    c.p = integer(j.at("p"), "p");
    if (c.p < 1) throw InputError("scenario config: p must be positive");
    set_default_balls(c);
  }
  if (j.contains("K")) c.K = integer(j.at("K"), "K");
  if (j.contains("n")) c.n = integer(j.at("n"), "n");
  if (j.contains("sigma2")) c.sigma2 = number(j, "sigma2", where);
  if (j.contains("pi")) c.pi = number(j, "pi", where);
  if (j.contains("delta")) c.delta = number(j, "delta", where);
  if (j.contains("grid")) {
    const Vector g = vector_from_json(j.at("grid"), "grid");
    c.grid.assign(g.data(), g.data() + g.size());
  }
  if (j.contains("replications")) c.replications = integer(j.at("replications"), "replications");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw InputError("scenario config: seed must be a nonnegative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("ball_pi")) c.ball_pi = ball_from_json(j.at("ball_pi"), "ball_pi");
  if (j.contains("ball_rest")) c.ball_rest = ball_from_json(j.at("ball_rest"), "ball_rest");
  if (j.contains("region")) {
    const std::string r = j.at("region").get<std::string>();
    if (r == "pi_ball") c.region = EvalRegion::pi_ball;
    else if (r == "union") c.region = EvalRegion::union_of_balls;
    else throw InputError("scenario config: region must be 'pi_ball' or 'union'");
  }
  if (j.contains("x_mean")) c.x_mean = number(j, "x_mean", where);
  if (j.contains("methods")) {
    c.methods.clear();
    for (const Json& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
  }
  if (j.contains("solver")) c.solver = solver_options_from_json(j.at("solver"));
  if (j.contains("threads")) c.threads = integer(j.at("threads"), "threads");
  check_config(c);
  return c;
}

void write_scenario_csv(std::ostream& os, const ScenarioReport& r) {
  const std::string tag(scenario_name(r.config.scenario));
  os << "scenario,grid_value,method,replication,metric,value\n";
  for (const MetricRow& m : r.rows)
    os << tag << ',' << format_double(m.grid_value) << ',' << method_name(m.method) << ','
       << m.replication << ',' << m.metric << ',' << format_double(m.value) << '\n';
}

Json aggregate_json(const ScenarioReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  // Results do not depend on the thread count; keep the file identical across it.
  j["config"].erase("threads");
  Json a = Json::array();
  for (const AggregateRow& x : r.aggregates)
    a.push_back({{"grid_value", x.grid_value}, {"method", std::string(method_name(x.method))},
                 {"metric", x.metric}, {"mean", x.mean}, {"se", x.se}, {"count", x.count}});
  j["aggregates"] = std::move(a);
  Json e = Json::array();
  for (const CellError& x : r.errors)
    e.push_back({{"grid_value", x.grid_value}, {"replication", x.replication}, {"method", x.method},
                 {"message", x.message}});
  j["errors"] = std::move(e);
  return j;
}

void write_loco_csv(std::ostream& os, const LocoReport& r) {
  os << "scenario,held_out,method,replication,metric,value\n";
  for (const LocoCell& c : r.cells) {
    auto row = [&](const char* metric, const std::optional<double>& v) {
      os << "loco," << c.held_out << ',' << c.method << ',' << c.replication << ',' << metric << ','
         << (v ? format_double(*v) : std::string("NA")) << '\n';
    };
    row("auroc", c.auroc);
    row("brier", c.brier);
  }
}

Json to_json(const LocoReport& r) {
  Json j = Json::array();
  for (const LocoSummary& s : r.summary)
    j.push_back({{"method", s.method}, {"mean_auroc", s.mean_auroc}, {"auroc_count", s.auroc_count},
                 {"mean_brier", s.mean_brier}, {"brier_count", s.brier_count}});
  return j;
}

}  // namespace mmr
