#include "mmrkit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mmrkit/data_model.hpp"
#include "mmrkit/duality_geometry.hpp"
#include "mmrkit/error.hpp"
#include "mmrkit/hiersim.hpp"
#include "mmrkit/local_fit.hpp"
#include "mmrkit/loco.hpp"
#include "mmrkit/robust_solvers.hpp"
#include "mmrkit/serialize.hpp"

#ifndef MMRKIT_VERSION
#define MMRKIT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace mmr {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class Run {
 public:
  Run(const std::vector<std::string>& args, std::ostream& out) : out_(out), t0_(std::chrono::steady_clock::now()) {
    for (std::size_t i = 0; i < args.size(); ++i) manifest_.command_line += (i ? " " : "") + args[i];
    manifest_.tool_version = MMRKIT_VERSION;
    manifest_.started_at = utc_now();
    digest_ = fnv1a64(manifest_.command_line);
  }

  void input(const std::string& path) { digest_ = fnv1a64(read_file(path), digest_); }
  void seed(std::uint64_t s) { manifest_.seed = s; }

  void write(const std::string& path, const std::string& text) {
    if (path == "-") {
      out_ << text;
      manifest_.outputs.push_back("-");
      return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write '" + path + "'");
    f << text;
    if (!f) throw DataError("write failed for '" + path + "'");
    manifest_.outputs.push_back(path);
  }

  void finish(const std::string& manifest_path) {
    manifest_.config_digest = hex64(digest_);
    manifest_.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    Json j;
    j["command_line"] = manifest_.command_line;
    j["config_digest"] = manifest_.config_digest;
    j["seed"] = manifest_.seed;
    j["tool_version"] = manifest_.tool_version;
    j["started_at"] = manifest_.started_at;
    j["wall_time_seconds"] = manifest_.wall_time_seconds;
    j["outputs"] = manifest_.outputs;
    const fs::path p(manifest_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write manifest '" + manifest_path + "'");
    f << j.dump(2) << '\n';
  }

 private:
  std::ostream& out_;
  std::chrono::steady_clock::time_point t0_;
  RunManifest manifest_;
  std::uint64_t digest_ = 0;
};

std::string manifest_for(const std::string& manifest, const std::string& out, const char* fallback) {
  if (!manifest.empty()) return manifest;
  if (out.empty() || out == "-") return fallback;
  return out + ".manifest.json";
}

std::vector<std::string> ids_of(const GroupedDataset& d) {
  std::vector<std::string> ids;
  for (const GroupSample& g : d.groups()) ids.push_back(g.group_id);
  return ids;
}

std::vector<std::string> ids_of(const std::vector<LocalFit>& fits) {
  std::vector<std::string> ids;
  for (const LocalFit& f : fits) ids.push_back(f.group_id);
  return ids;
}

struct DataArgs {
  std::string path;
  std::string group_col = "group";
  std::string response_col = "y";

  void add(CLI::App* sc, bool required) {
    auto* o = sc->add_option("--data", path, "grouped CSV (group, y, covariates)");
    if (required) o->required();
    sc->add_option("--group-col", group_col, "group column name")->capture_default_str();
    sc->add_option("--response-col", response_col, "response column name")->capture_default_str();
  }
  GroupedDataset load(Run& run) const {
    run.input(path);
    CsvSchema s;
    s.group_column = group_col;
    s.response_column = response_col;
    return load_grouped_csv(path, s);
  }
};

const std::vector<std::string> kMethods{"mmr", "gdro", "pooled", "mmv"};
const std::vector<std::string> kLosses{"square", "gaussian", "logistic", "poisson"};

// Merge every tidy CSV under `dir` into one table with a leading source column.
std::string merge_reports(const std::string& dir, Run& run) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream os;
  os << "source,scenario,grid_value,group,method,replication,metric,value\n";
  int merged = 0;
  for (const fs::path& f : files) {
    std::ifstream in(f);
    std::string header;
    std::getline(in, header);
    const bool sim = header == "scenario,grid_value,method,replication,metric,value";
    const bool loco = header == "scenario,held_out,method,replication,metric,value";
    if (!sim && !loco) continue;
    run.input(f.string());
    ++merged;
    const std::string src = fs::relative(f, dir).generic_string();
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      std::vector<std::string> c;
      std::stringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) c.push_back(cell);
      if (c.size() != 6) throw DataError("'" + f.string() + "': malformed row '" + line + "'");
      os << src << ',' << c[0] << ',' << (sim ? c[1] : "") << ',' << (sim ? "" : c[1]) << ',' << c[2] << ','
         << c[3] << ',' << c[4] << ',' << c[5] << '\n';
    }
  }
  if (merged == 0) throw DataError("no tidy CSV outputs under '" + dir + "'");
  return os.str();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Min-max regret estimation for heterogeneous groups", "mmrkit"};
  app.set_version_flag("--version", std::string(MMRKIT_VERSION));
  app.require_subcommand(1, 1);

  std::string out_path = "-";
  std::string manifest;
  std::string opts_path;
  bool trace = false;

  // fit
  auto* fit = app.add_subcommand("fit", "fit one estimator and write FitResult JSON");
  DataArgs fit_data;
  fit_data.add(fit, true);
  std::string method, loss_name = "square";
  fit->add_option("--method", method, "estimator")->required()->check(CLI::IsMember(kMethods));
  fit->add_option("--loss", loss_name, "loss")->check(CLI::IsMember(kLosses))->capture_default_str();
  fit->add_option("--opts", opts_path, "solver options JSON file");
  fit->add_flag("--trace", trace, "include the iteration trace");
  fit->add_option("--out", out_path, "output file, - for stdout")->capture_default_str();
  fit->add_option("--manifest", manifest, "manifest path");

  // summarize
  auto* summarize = app.add_subcommand("summarize", "per-group local fits as JSON");
  DataArgs sum_data;
  sum_data.add(summarize, true);
  summarize->add_option("--loss", loss_name, "loss")->check(CLI::IsMember(kLosses))->capture_default_str();
  summarize->add_option("--out", out_path, "output file, - for stdout")->capture_default_str();
  summarize->add_option("--manifest", manifest, "manifest path");

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "check group sizes and ranks");
  DataArgs val_data;
  val_data.add(validate_cmd, true);
  validate_cmd->add_option("--out", out_path, "output file, - for stdout")->capture_default_str();
  validate_cmd->add_option("--manifest", manifest, "manifest path");

  // dual
  auto* dual = app.add_subcommand("dual", "population dual solution with certificates");
  DataArgs dual_data;
  dual_data.add(dual, false);
  std::string summaries_path, kind, sigma_mode = "common", family_name = "logistic";
  dual->add_option("--summaries", summaries_path, "summaries JSON from 'summarize'");
  dual->add_option("--kind", kind, "dual problem")->required()->check(CLI::IsMember({"mmr-lm", "mmv-lm", "mmr-glm"}));
  dual->add_option("--sigma", sigma_mode, "common: require equal Sigma_k; pooled: use the pooled second moment")
      ->check(CLI::IsMember({"common", "pooled"}))->capture_default_str();
  dual->add_option("--family", family_name, "family for mmr-glm")
      ->check(CLI::IsMember({"gaussian", "logistic", "poisson"}))->capture_default_str();
  dual->add_option("--out", out_path, "output file, - for stdout")->capture_default_str();
  dual->add_option("--manifest", manifest, "manifest path");

  // degeneration
  auto* degen = app.add_subcommand("degeneration", "check the degeneration conditions of GDRO, MMV and MMR");
  DataArgs degen_data;
  degen_data.add(degen, false);
  degen->add_option("--summaries", summaries_path, "summaries JSON from 'summarize'");
  degen->add_option("--out", out_path, "output file, - for stdout")->capture_default_str();
  degen->add_option("--manifest", manifest, "manifest path");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a simulation scenario");
  std::string config_path, out_dir = ".";
  int threads = 0;
  sim->add_option("--config", config_path, "scenario config JSON")->required();
  sim->add_option("--out", out_dir, "output directory")->capture_default_str();
  sim->add_option("--threads", threads, "worker threads (0: MMRKIT_THREADS or all cores)");
  sim->add_option("--manifest", manifest, "manifest path");

  // evaluate-loco
  auto* loco = app.add_subcommand("evaluate-loco", "leave-one-group-out AuROC and Brier evaluation");
  DataArgs loco_data;
  loco_data.add(loco, true);
  std::vector<std::string> methods = kMethods;
  double split = 0.5;
  int reps = 1;
  std::uint64_t seed = 1;
  std::string summary_path;
  loco->add_option("--methods", methods, "estimators")->check(CLI::IsMember(kMethods));
  loco->add_option("--split", split, "held-out training fraction")->capture_default_str();
  loco->add_option("--replications", reps, "random splits per group")->capture_default_str();
  loco->add_option("--seed", seed, "split seed")->capture_default_str();
  loco->add_option("--opts", opts_path, "solver options JSON file");
  loco->add_option("--out", out_path, "metrics CSV, - for stdout")->capture_default_str();
  loco->add_option("--summary", summary_path, "per-method summary JSON");
  loco->add_option("--manifest", manifest, "manifest path");

  // report
  auto* report = app.add_subcommand("report", "merge tidy run outputs into one CSV");
  std::string in_dir;
  report->add_option("--in", in_dir, "directory with run outputs")->required();
  report->add_option("--out", out_path, "merged CSV, - for stdout")->capture_default_str();
  report->add_option("--manifest", manifest, "manifest path");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << MMRKIT_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  Run run(args, out);
  auto solver_opts = [&]() {
    if (opts_path.empty()) return SolverOptions{};
    run.input(opts_path);
    return solver_options_from_json(read_json(opts_path));
  };
  auto load_summaries = [&](const DataArgs& d, const LossSpec& loss) {
    if (!summaries_path.empty() == !d.path.empty())
      throw InputError("give exactly one of --summaries and --data");
    if (!summaries_path.empty()) {
      run.input(summaries_path);
      return summaries_from_json(read_json(summaries_path));
    }
    return group_summaries(d.load(run), loss);
  };

  int code = kExitOk;
  if (*fit) {
    const GroupedDataset data = fit_data.load(run);
    const SolverOptions o = solver_opts();
    const FitResult r = fit_method(parse_method(method), data, LossSpec::parse(loss_name), o);
    run.write(out_path, to_json(r, ids_of(data), trace).dump(2) + "\n");
    if (!r.converged) {
      err << "warning: solver stopped at gap " << format_double(r.gap) << " above tolerance\n";
      code = kExitNoConvergence;
    }
    run.finish(manifest_for(manifest, out_path, "fit.manifest.json"));
  } else if (*summarize) {
    const GroupedDataset data = sum_data.load(run);
    run.write(out_path, summaries_to_json(group_summaries(data, LossSpec::parse(loss_name))).dump(2) + "\n");
    run.finish(manifest_for(manifest, out_path, "summarize.manifest.json"));
  } else if (*validate_cmd) {
    const ValidationReport rep = validate(val_data.load(run));
    run.write(out_path, to_json(rep).dump(2) + "\n");
    if (!rep.ok()) {
      err << "error: some groups cannot be fit (see flags)\n";
      code = kExitData;
    }
    run.finish(manifest_for(manifest, out_path, "validate.manifest.json"));
  } else if (*dual) {
    const DualKind k = parse_dual_kind(kind);
    DualSolution sol;
    std::vector<std::string> ids;
    if (k == DualKind::mmr_glm) {
      if (dual_data.path.empty()) throw InputError("mmr-glm needs --data (the covariate sample defines the cumulant)");
      const GroupedDataset data = dual_data.load(run);
      const GlmFamily fam = GlmFamily::parse(family_name);
      const EmpiricalCumulant a(data.pooled().X, fam);
      const std::vector<LocalFit> fits = group_summaries(data, LossSpec::glm(fam));
      std::vector<Vector> mus;
      for (const LocalFit& f : fits) mus.push_back(a.gradient(f.beta_hat));
      sol = mmr_dual_glm(mus, a);
      ids = ids_of(fits);
    } else {
      const std::vector<LocalFit> fits = load_summaries(dual_data, LossSpec::square());
      SymMatrix sigma;
      if (sigma_mode == "common") {
        sigma = common_sigma(fits);
      } else {
        Matrix m = Matrix::Zero(fits.front().sigma_mat.dim(), fits.front().sigma_mat.dim());
        double n = 0.0;
        for (const LocalFit& f : fits) {
          m += static_cast<double>(f.n) * f.sigma_mat.matrix();
          n += static_cast<double>(f.n);
        }
        sigma = SymMatrix::symmetrized(m / n);
      }
      std::vector<Vector> betas;
      for (const LocalFit& f : fits) betas.push_back(f.beta_hat);
      sol = k == DualKind::mmr_lm ? mmr_dual_lm(betas, sigma) : mmv_dual_lm(betas, sigma);
      ids = ids_of(fits);
    }
    run.write(out_path, to_json(sol, ids).dump(2) + "\n");
    run.finish(manifest_for(manifest, out_path, "dual.manifest.json"));
  } else if (*degen) {
    const std::vector<LocalFit> fits = load_summaries(degen_data, LossSpec::square());
    run.write(out_path, to_json(check_degeneration(fits), ids_of(fits)).dump(2) + "\n");
    run.finish(manifest_for(manifest, out_path, "degeneration.manifest.json"));
  } else if (*sim) {
    run.input(config_path);
    ScenarioConfig cfg = scenario_config_from_json(read_json(config_path));
    if (threads > 0) cfg.threads = threads;
    run.seed(cfg.seed);
    const ScenarioReport rep = run_scenario(cfg);
    const std::string stem = (fs::path(out_dir) / std::string(scenario_name(cfg.scenario))).string();
    std::ostringstream csv;
    write_scenario_csv(csv, rep);
    run.write(stem + "_rows.csv", csv.str());
    run.write(stem + "_aggregate.json", aggregate_json(rep).dump(2) + "\n");
    if (!rep.errors.empty()) err << "note: " << rep.errors.size() << " cell diagnostics recorded in the aggregate JSON\n";
    run.finish(manifest.empty() ? stem + "_manifest.json" : manifest);
  } else if (*loco) {
    const GroupedDataset data = loco_data.load(run);
    LocoOptions lo;
    lo.methods.clear();
    for (const std::string& m : methods) lo.methods.push_back(parse_method(m));
    lo.split_ratio = split;
    lo.replications = reps;
    lo.seed = seed;
    lo.solver = solver_opts();
    run.seed(seed);
    const LocoReport rep = loco_harness(data, lo);
    std::ostringstream csv;
    write_loco_csv(csv, rep);
    run.write(out_path, csv.str());
    if (!summary_path.empty()) run.write(summary_path, to_json(rep).dump(2) + "\n");
    run.finish(manifest_for(manifest, out_path, "loco.manifest.json"));
  } else if (*report) {
    const std::string merged = merge_reports(in_dir, run);
    run.write(out_path, merged);
    run.finish(manifest_for(manifest, out_path, "report.manifest.json"));
  }
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace mmr
