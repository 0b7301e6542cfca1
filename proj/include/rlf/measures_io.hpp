#pragma once

// JSON schema for particle measures and ensembles:
//   ParticleMeasure: {"dim": d, "points": [[x_1..x_d], ...], "weights": [w, ...]}
//   MeasureEnsemble: {"dim": d, "members": [{"weight": w, "measure": <ParticleMeasure>}, ...]}
// GridDensity CSV: header "index,c_0,...,c_{d-1},value", one row per cell,
// cell centers in the c_* columns.

#include <iosfwd>
#include <string>

#include "json.hpp"
#include "rlf/measures.hpp"

namespace rlf::measures {

nlohmann::json to_json(const ParticleMeasure& mu);
ParticleMeasure particle_measure_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MeasureEnsemble& nu);
MeasureEnsemble ensemble_from_json(const nlohmann::json& j);

void write_density_csv(std::ostream& os, const GridDensity& rho);
void write_density_csv(const std::string& path, const GridDensity& rho);

}  // namespace rlf::measures
