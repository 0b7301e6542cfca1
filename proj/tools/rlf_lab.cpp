// rlf-lab: run named experiments and emit plot data.
//   rlf-lab run <config.json>      exit 0 pass, 2 failed check, 1 error
//   rlf-lab list-experiments
//   rlf-lab emit-plots <run-dir>   reads <run-dir>/record.json

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rlf/harness.hpp"

namespace {

void print_record(const rlf::harness::RunRecord& rec) {
  for (const auto& s : rec.stages) {
    std::cout << (s.status == "ok" ? (s.pass ? "PASS " : "FAIL ") : (s.status == "skipped" ? "SKIP " : "ERROR "))
              << s.name;
    if (!s.reason.empty()) std::cout << ": " << s.reason;
    std::cout << '\n';
  }
  std::cout << (rec.pass() ? "run passed" : "run failed") << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rlf-lab: Lagrangian flows, weak forms and semiclassical limits"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config file");
  run->add_option("config", config_path, "Config file")->required();

  app.add_subcommand("list-experiments", "List registered experiments");

  std::string run_dir;
  auto* emit = app.add_subcommand("emit-plots", "Rewrite plot data from a run directory");
  emit->add_option("run-dir", run_dir, "Directory containing record.json")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list-experiments")) {
      for (const auto& n : rlf::harness::registered_experiments()) std::cout << n << '\n';
      return 0;
    }
    if (app.got_subcommand("run")) {
      const auto cfg = rlf::harness::load_config(config_path);
      const auto rec = rlf::harness::run_experiment(cfg);
      print_record(rec);
      std::cout << "output: " << rlf::harness::resolve_output_dir(cfg).string() << '\n';
      return rec.pass() ? 0 : 2;
    }
    std::ifstream in(std::filesystem::path(run_dir) / "record.json");
    if (!in) throw rlf::ParameterError("no record.json in " + run_dir);
    const auto rec = rlf::harness::record_from_json(nlohmann::json::parse(in));
    for (const auto& f : rlf::harness::emit_plotdata(rec, std::filesystem::path(run_dir) / "plots")) {
      std::cout << f << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
