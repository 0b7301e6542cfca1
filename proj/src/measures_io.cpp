#include "rlf/measures_io.hpp"

#include <fstream>
#include <ostream>

namespace rlf::measures {

nlohmann::json to_json(const ParticleMeasure& mu) {
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto x = mu.point(i);
    points.push_back(std::vector<double>(x.begin(), x.end()));
  }
  return {{"dim", mu.dim()}, {"points", std::move(points)}, {"weights", mu.weights()}};
}

ParticleMeasure particle_measure_from_json(const nlohmann::json& j) {
  const auto dim = j.at("dim").get<std::size_t>();
  const auto& points = j.at("points");
  auto weights = j.at("weights").get<std::vector<double>>();
  if (points.size() != weights.size()) {
    throw DimensionError("particle_measure_from_json: points/weights length mismatch");
  }
  std::vector<double> coords;
  coords.reserve(points.size() * dim);
  for (const auto& p : points) {
    auto x = p.get<std::vector<double>>();
    if (x.size() != dim) throw DimensionError("particle_measure_from_json: point has wrong dimension");
    coords.insert(coords.end(), x.begin(), x.end());
  }
  return ParticleMeasure(dim, std::move(coords), std::move(weights));
}

nlohmann::json to_json(const MeasureEnsemble& nu) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t j = 0; j < nu.size(); ++j) {
    members.push_back({{"weight", nu.weights[j]}, {"measure", to_json(nu.members[j])}});
  }
  return {{"dim", nu.dim()}, {"members", std::move(members)}};
}

MeasureEnsemble ensemble_from_json(const nlohmann::json& j) {
  MeasureEnsemble nu;
  const auto dim = j.at("dim").get<std::size_t>();
  for (const auto& m : j.at("members")) {
    auto mu = particle_measure_from_json(m.at("measure"));
    if (mu.dim() != dim) throw DimensionError("ensemble_from_json: member dimension mismatch");
    nu.add(m.at("weight").get<double>(), std::move(mu));
  }
  return nu;
}

void write_density_csv(std::ostream& os, const GridDensity& rho) {
  const std::size_t d = rho.grid.dim();
  os << "index";
  for (std::size_t a = 0; a < d; ++a) os << ",c_" << a;
  os << ",value\n";
  for (std::size_t c = 0; c < rho.values.size(); ++c) {
    os << c;
    for (double x : rho.grid.cell_center(c)) os << ',' << format_double(x);
    os << ',' << format_double(rho.values[c]) << '\n';
  }
}

void write_density_csv(const std::string& path, const GridDensity& rho) {
  std::ofstream os(path);
  if (!os) throw Error("write_density_csv: cannot open " + path);
  write_density_csv(os, rho);
}

}  // namespace rlf::measures
