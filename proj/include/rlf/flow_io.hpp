#pragma once

// FlowMap CSV bundle, written into one directory:
//   times.csv      k,t
//   states.csv     trajectory,k,z_0,...,z_{d-1}    (complete trajectories only)
//   status.csv     trajectory,status,event_time,min_singular_dist,weight,x_0,...
//   manifest.json  {"dim","trajectories","samples","horizon","field",
//                   "invalid_mass","files":{...}}
// Numbers use the shortest round-trip decimal form.

#include <string>

#include "json.hpp"
#include "rlf/flow.hpp"

namespace rlf::flow {

nlohmann::json write_flow_bundle(const FlowMap& F, const std::string& directory);

struct FlowBundle {
  ParticleMeasure base;
  std::vector<double> times;
  std::vector<Status> status;
  std::vector<double> states;  // trajectory x time x dim, NaN for invalid
  nlohmann::json manifest;
};

FlowBundle read_flow_bundle(const std::string& directory);

Status status_from_string(const std::string& s);

}  // namespace rlf::flow
