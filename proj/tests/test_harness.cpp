#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rlf/harness.hpp"

using namespace rlf;
using namespace rlf::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("rlf_harness_" + name);
  fs::remove_all(d);
  return d;
}

StageReport ok_stage(const std::string& name, json data) {
  StageReport s;
  s.name = name;
  s.status = "ok";
  s.pass = true;
  s.data = std::move(data);
  return s;
}

json sweep_data() {
  const json eps = {0.4, 0.2, 0.1, 0.05};
  return {{"eps", eps},
          {"D", {0.04, 0.02, 0.01, 0.005}},
          {"D_forward", {0.03, 0.02, 0.01, 0.004}},
          {"D_backward", {0.04, 0.01, 0.01, 0.005}},
          {"times", {-1.0, 0.0, 1.0}},
          {"distance_t", {{0.1, 0.0, 0.1}, {0.1, 0.0, 0.1}, {0.1, 0.0, 0.1}, {0.1, 0.0, 0.1}}}};
}

json transforms_data() {
  return {{"max_wigner_x_error", 1e-14},
          {"max_wigner_p_error", 1e-9},
          {"min_husimi", 0.0},
          {"max_husimi_mass_error", 1e-8},
          {"tolerances", {{"wigner_x", 1e-8}, {"wigner_p", 1e-6}, {"husimi_min", -1e-12}, {"husimi_mass", 1e-6}}},
          {"checks", {{"wigner_x", true}, {"wigner_p", true}, {"husimi_min", true}, {"husimi_mass", true}}}};
}

json hypotheses_data() {
  json reg = json::array(), sp = json::array(), tm = json::array();
  for (int i = 0; i < 4; ++i) {
    reg.push_back({{"value", 0.1}, {"C", 0.12}, {"pass", true}});
    sp.push_back({{"sweep", {1.0, 2.0}}, {"fractions", {0.2, 0.0}}});
    tm.push_back({{"sweep", {1.0, 2.0, 4.0}}, {"fractions", {1.0, 0.4, 0.0}}});
  }
  return {{"eps", {0.4, 0.2, 0.1, 0.05}},
          {"regularity", reg},
          {"decay", {{"deltas", {0.1, 0.01}}, {"values", {{0.0, 0.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0}}}}},
          {"space_tightness", sp},
          {"time_tightness", tm},
          {"limit_continuity", {{"values", {0.01, 0.005, 0.003, 0.002}}, {"floor", 0.008}}},
          {"gaps", {0.04, 0.02, 0.01, 0.005}}};
}

ExperimentConfig small_rlf_check(const fs::path& out) {
  ExperimentConfig c;
  c.experiment = "rlf-check";
  c.seed = 1;
  c.output_dir = out.string();
  c.field = "harmonic(omega=1)";
  c.T = 1.0;
  c.ensemble.kind = "lattice";
  c.grid = {{{-1.0, -1.0}, {1.0, 1.0}}, {60, 60}};
  c.kde_grid = {{{-1.6, -1.6}, {1.6, 1.6}}, {64, 64}};
  c.flow.dt = 0.01;
  c.flow.samples = 129;
  return c;
}

}  // namespace

TEST_CASE("registered experiments") {
  const auto& names = registered_experiments();
  for (const char* n : {"rlf-check", "stability-hypotheses", "semiclassical", "alpha1", "oracle-consistency"}) {
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  }
}

TEST_CASE("configs round trip through JSON") {
  ExperimentConfig c;
  c.experiment = "semiclassical";
  c.seed = 11;
  c.eps_list = {0.3, 0.15};
  c.quantum.N = 2048;
  c.tolerances.marginal = 0.07;
  c.sweeps.R = {1.0, 3.0};
  CHECK(config_from_json(to_json(c)) == c);
  CHECK(config_from_json(json::parse(to_json(c).dump())) == c);
  for (const auto& entry : fs::directory_iterator(RLF_CONFIG_DIR)) {
    CAPTURE(entry.path().string());
    const auto cfg = load_config(entry.path());
    CHECK(config_from_json(to_json(cfg)) == cfg);
  }
}

TEST_CASE("config validation") {
  const json base = {{"experiment", "semiclassical"}, {"seed", 3}};
  CHECK_NOTHROW(config_from_json(base));
  json j = base;
  j.erase("seed");
  CHECK_THROWS_AS(config_from_json(j), ParameterError);
  j = base;
  j["quantum"] = {{"N", 1024}, {"bogus", 1}};
  CHECK_THROWS_AS(config_from_json(j), ParameterError);
  j = base;
  j["colour"] = "red";
  CHECK_THROWS_AS(config_from_json(j), ParameterError);
  j = base;
  j["experiment"] = "no-such-experiment";
  CHECK_THROWS_AS(config_from_json(j), ParameterError);
  j = base;
  j["field"] = "yukawa(k=1)";
  CHECK_THROWS_AS(config_from_json(j), ParameterError);
}

TEST_CASE("an unknown experiment writes nothing") {
  const auto root = scratch("unknown");
  fs::create_directories(root);
  ::setenv("RLF_LAB_OUTPUT_ROOT", root.string().c_str(), 1);
  ExperimentConfig c;
  c.experiment = "no-such-experiment";
  c.seed = 1;
  CHECK(resolve_output_dir(c) == root / "runs" / "no-such-experiment");
  CHECK_THROWS_AS(run_experiment(c), ParameterError);
  CHECK(fs::is_empty(root));
  ::unsetenv("RLF_LAB_OUTPUT_ROOT");
  fs::remove_all(root);
}

TEST_CASE("a small rlf-check run passes and its plot data is reproducible") {
  const auto a = scratch("rlf_a"), b = scratch("rlf_b");
  const auto ra = run_experiment(small_rlf_check(a));
  const auto rb = run_experiment(small_rlf_check(b));
  CHECK(ra.pass());
  REQUIRE(ra.stage("rlf") != nullptr);
  CHECK(ra.stage("rlf")->pass);
  CHECK(fs::exists(a / "record.json"));
  CHECK(load_config(a / "config.json") == small_rlf_check(a));
  const auto csv = fs::path("plots") / "density_bound.csv";
  REQUIRE(fs::exists(a / csv));
  CHECK(slurp(a / csv) == slurp(b / csv));
  const auto back = record_from_json(json::parse(slurp(a / "record.json")));
  CHECK(back.experiment == "rlf-check");
  CHECK(back.stages.size() == ra.stages.size());
  CHECK(back.pass() == ra.pass());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("an empty record emits only a manifest listing the gap") {
  const auto d = scratch("empty");
  RunRecord r;
  r.experiment = "semiclassical";
  const auto files = emit_plotdata(r, d);
  REQUIRE(files.size() == 1);
  CHECK(files[0] == "manifest.json");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(d)) ++n;
  CHECK(n == 1);
  const auto m = json::parse(slurp(d / "manifest.json"));
  CHECK_FALSE(m.at("gaps").empty());
  fs::remove_all(d);
}

TEST_CASE("semiclassical record emits D_vs_eps with one row per eps") {
  const auto d = scratch("semi");
  RunRecord r;
  r.experiment = "semiclassical";
  r.stages.push_back(ok_stage("sweep", sweep_data()));
  r.stages.push_back(ok_stage("transforms", transforms_data()));
  const auto files = emit_plotdata(r, d);
  CHECK(files.back() == "manifest.json");
  REQUIRE(fs::exists(d / "D_vs_eps.csv"));
  CHECK(line_count(d / "D_vs_eps.csv") == 1 + 4);
  CHECK(line_count(d / "distance_vs_t.csv") == 1 + 12);
  CHECK(line_count(d / "transform_checks.csv") == 1 + 4);
  CHECK(fs::exists(d / "README.md"));
  CHECK(json::parse(slurp(d / "manifest.json")).at("gaps").empty());
  fs::remove_all(d);
}

TEST_CASE("stability record emits the five hypothesis tables") {
  const auto d = scratch("stab");
  RunRecord r;
  r.experiment = "stability-hypotheses";
  r.stages.push_back(ok_stage("sweep", sweep_data()));
  r.stages.push_back(ok_stage("hypotheses", hypotheses_data()));
  StageReport skipped;
  skipped.name = "decay_sweep";
  skipped.status = "skipped";
  skipped.reason = "not run";
  r.stages.push_back(skipped);
  emit_plotdata(r, d);
  for (const char* f : {"hyp_regularity.csv", "hyp_decay.csv", "hyp_space_tightness.csv", "hyp_time_tightness.csv",
                        "hyp_limit_continuity.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(d / f));
  }
  CHECK(line_count(d / "hyp_regularity.csv") == 1 + 4);
  CHECK(line_count(d / "hyp_decay.csv") == 1 + 8);
  CHECK(line_count(d / "hyp_time_tightness.csv") == 1 + 12);
  const auto gaps = json::parse(slurp(d / "manifest.json")).at("gaps");
  REQUIRE(gaps.size() == 1);
  CHECK(gaps[0].at("stage") == "decay_sweep");
  fs::remove_all(d);
}

TEST_CASE("failed stages are not rendered") {
  const auto d = scratch("failed");
  RunRecord r;
  r.experiment = "semiclassical";
  StageReport bad;
  bad.name = "sweep";
  bad.status = "error";
  bad.reason = "boom";
  r.stages.push_back(bad);
  r.stages.push_back(ok_stage("transforms", transforms_data()));
  emit_plotdata(r, d);
  CHECK_FALSE(fs::exists(d / "D_vs_eps.csv"));
  CHECK(fs::exists(d / "transform_checks.csv"));
  fs::remove_all(d);
}

TEST_CASE("version stamp") { CHECK_FALSE(version_stamp().empty()); }
