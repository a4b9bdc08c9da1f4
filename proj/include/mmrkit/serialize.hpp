#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmrkit/data_model.hpp"
#include "mmrkit/duality_geometry.hpp"
#include "mmrkit/hiersim.hpp"
#include "mmrkit/local_fit.hpp"
#include "mmrkit/loco.hpp"
#include "mmrkit/robust_solvers.hpp"

namespace mmr {

using Json = nlohmann::ordered_json;

/// %.17g
std::string format_double(double v);

Json to_json(const Vector& v);
Vector vector_from_json(const Json& j, const char* what);

Json to_json(const ValidationReport& r);

Json to_json(const LocalFit& f);
LocalFit local_fit_from_json(const Json& j);
Json summaries_to_json(const std::vector<LocalFit>& fits);
std::vector<LocalFit> summaries_from_json(const Json& j);

/// `group_ids` label per_group_regret and gamma_hat.
Json to_json(const FitResult& r, const std::vector<std::string>& group_ids, bool with_trace = false);
SolverOptions solver_options_from_json(const Json& j);

Json to_json(const DualSolution& d, const std::vector<std::string>& group_ids);
Json to_json(const DegenerationReport& r, const std::vector<std::string>& group_ids);

Json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const Json& j);

/// scenario,grid_value,method,replication,metric,value
void write_scenario_csv(std::ostream& os, const ScenarioReport& r);
Json aggregate_json(const ScenarioReport& r);

/// scenario,held_out,method,replication,metric,value
void write_loco_csv(std::ostream& os, const LocoReport& r);
Json to_json(const LocoReport& r);

}  // namespace mmr
