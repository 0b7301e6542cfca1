#include "rlf/flow_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace rlf::flow {

namespace fs = std::filesystem;

Status status_from_string(const std::string& s) {
  if (s == "complete") return Status::complete;
  if (s == "singular_hit") return Status::singular_hit;
  if (s == "escaped") return Status::escaped;
  throw ParameterError("unknown trajectory status '" + s + "'");
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot open " + p.string() + " for writing");
  return os;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("cannot open " + p.string());
  return is;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

nlohmann::json write_flow_bundle(const FlowMap& F, const std::string& directory) {
  const fs::path dir(directory);
  fs::create_directories(dir);
  const std::size_t d = F.dim();
  {
    auto os = open_out(dir / "times.csv");
    os << "k,t\n";
    for (std::size_t k = 0; k < F.samples(); ++k) os << k << ',' << format_double(F.times[k]) << '\n';
  }
  {
    auto os = open_out(dir / "states.csv");
    os << "trajectory,k";
    for (std::size_t j = 0; j < d; ++j) os << ",z_" << j;
    os << '\n';
    for (std::size_t i = 0; i < F.size(); ++i) {
      if (!F.valid(i)) continue;
      for (std::size_t k = 0; k < F.samples(); ++k) {
        os << i << ',' << k;
        for (double v : F.state(i, k)) os << ',' << format_double(v);
        os << '\n';
      }
    }
  }
  {
    auto os = open_out(dir / "status.csv");
    os << "trajectory,status,event_time,min_singular_dist,weight";
    for (std::size_t j = 0; j < d; ++j) os << ",x_" << j;
    os << '\n';
    for (std::size_t i = 0; i < F.size(); ++i) {
      os << i << ',' << to_string(F.status[i]) << ',' << format_double(F.event_time[i]) << ','
         << format_double(F.min_singular_dist[i]) << ',' << format_double(F.base.weight(i));
      for (double v : F.base.point(i)) os << ',' << format_double(v);
      os << '\n';
    }
  }
  nlohmann::json manifest = {
      {"dim", d},
      {"trajectories", F.size()},
      {"samples", F.samples()},
      {"horizon", F.horizon},
      {"field", F.field ? F.field->label() : std::string()},
      {"invalid_mass", F.invalid_mass},
      {"files", {{"times", "times.csv"}, {"states", "states.csv"}, {"status", "status.csv"}}}};
  auto os = open_out(dir / "manifest.json");
  os << manifest.dump(2) << '\n';
  return manifest;
}

FlowBundle read_flow_bundle(const std::string& directory) {
  const fs::path dir(directory);
  FlowBundle b;
  {
    auto is = open_in(dir / "manifest.json");
    b.manifest = nlohmann::json::parse(is);
  }
  const auto d = b.manifest.at("dim").get<std::size_t>();
  const auto N = b.manifest.at("trajectories").get<std::size_t>();
  const auto S = b.manifest.at("samples").get<std::size_t>();
  std::string line;
  {
    auto is = open_in(dir / "times.csv");
    std::getline(is, line);
    while (std::getline(is, line)) b.times.push_back(std::stod(split_csv(line).at(1)));
  }
  if (b.times.size() != S) throw Error("read_flow_bundle: times.csv disagrees with manifest");
  b.base = ParticleMeasure(d);
  {
    auto is = open_in(dir / "status.csv");
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto cells = split_csv(line);
      if (cells.size() != 5 + d) throw Error("read_flow_bundle: malformed status row");
      b.status.push_back(status_from_string(cells[1]));
      Vec x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = std::stod(cells[5 + j]);
      b.base.add(x, std::stod(cells[4]));
    }
  }
  if (b.status.size() != N) throw Error("read_flow_bundle: status.csv disagrees with manifest");
  b.states.assign(N * S * d, std::numeric_limits<double>::quiet_NaN());
  {
    auto is = open_in(dir / "states.csv");
    std::getline(is, line);
    while (std::getline(is, line)) {
      const auto cells = split_csv(line);
      if (cells.size() != 2 + d) throw Error("read_flow_bundle: malformed states row");
      const auto i = std::stoul(cells[0]);
      const auto k = std::stoul(cells[1]);
      if (i >= N || k >= S) throw Error("read_flow_bundle: state index out of range");
      for (std::size_t j = 0; j < d; ++j) b.states[(i * S + k) * d + j] = std::stod(cells[2 + j]);
    }
  }
  return b;
}

}  // namespace rlf::flow
