#pragma once

// Named experiment pipelines, their JSON configuration, run records and
// plot-data emission. Config schema (all keys optional except "experiment"
// and "seed"; unknown keys are rejected):
//
// {
//   "experiment": "semiclassical",          registered pipeline name
//   "seed": 7,                              mandatory RNG seed
//   "output_dir": "runs/semiclassical",     relative to $RLF_LAB_OUTPUT_ROOT when set
//   "field": "harmonic(omega=2)",           field spec (phase-space dimension 2n)
//   "n": 1,
//   "T": 1.0,
//   "ensemble": {"kind": "weighted_samples", "center": [1, 0], "width": 1,
//                "box": {"lo": [-1, -2], "hi": [3, 2]}, "count": 5},
//   "grid": {"box": {"lo": [-3, -3], "hi": [3, 3]}, "cells": [64, 64]},
//   "kde_grid": {...},                      density-estimate grid of rlf-check
//   "eps_list": [0.4, 0.2, 0.1, 0.05], "alpha": 0.5,
//   "envelope": {"kind": "bump", "width": 2}, "p0": 1.0,
//   "flow": {"dt": 1e-3, "samples": 256, "guard": 0.1, "min_dist": 1e-4},
//   "quantum": {"N": 4096, "L": 0, "dt": 1e-3, "per_direction": 21,
//               "wigner_stride": 4, "threshold": 1e-8, "alias_tol": 1e-6,
//               "husimi_spacing": 0.25, "husimi_p_max": 20},
//   "dictionary": {"box": {...}, "levels": 3, "test_level": 2},
//   "tolerances": {...}, "sweeps": {"deltas": [...], "R": [...], "M": [...]},
//   "decay": {"field": "coulomb(k=1)", "count": 5, "x_min": 1.5, ...},
//   "oracle": {...}
// }
//
// Ensemble kinds: "weighted_samples" (count seeded uniform draws in box,
// weights from the Gaussian density exp(-|z - center|^2 / width^2)),
// "lattice" (cell centres of `grid`, uniform weights), "dirac_grid"
// (cell centres of `grid`, Gaussian weights).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlf/common.hpp"
#include "rlf/measures.hpp"

namespace rlf::harness {

struct BoxSpec {
  Vec lo;
  Vec hi;

  Box box() const { return Box(lo, hi); }
  bool operator==(const BoxSpec&) const = default;
};

struct GridSpecConfig {
  BoxSpec box{{-3.0, -3.0}, {3.0, 3.0}};
  std::vector<std::size_t> cells{64, 64};

  measures::GridSpec grid() const { return measures::GridSpec(box.box(), cells); }
  bool operator==(const GridSpecConfig&) const = default;
};

struct EnsembleSpec {
  std::string kind = "weighted_samples";
  Vec center{1.0, 0.0};
  double width = 1.0;
  BoxSpec box{{-1.0, -2.0}, {3.0, 2.0}};
  std::size_t count = 5;

  bool operator==(const EnsembleSpec&) const = default;
};

struct EnvelopeSpec {
  std::string kind = "bump";
  double width = 2.0;

  bool operator==(const EnvelopeSpec&) const = default;
};

struct FlowSpec {
  double dt = 1e-3;
  std::size_t samples = 256;
  double guard = 0.1;
  double min_dist = 1e-4;

  bool operator==(const FlowSpec&) const = default;
};

struct QuantumSpec {
  std::size_t N = 4096;
  double L = 0.0;
  double dt = 1e-3;
  std::size_t per_direction = 21;
  std::size_t wigner_stride = 4;
  double threshold = 1e-8;
  double alias_tol = 1e-6;
  double husimi_spacing = 0.25;
  double husimi_p_max = 20.0;

  bool operator==(const QuantumSpec&) const = default;
};

struct DictionarySpec {
  BoxSpec box{{-4.0, -4.0}, {4.0, 4.0}};
  int levels = 3;
  int test_level = 2;

  bool operator==(const DictionarySpec&) const = default;
};

struct Tolerances {
  double rlf_slack = 0.1;           // density bound slack
  double rlf_residual = 1e-6;       // ODE residual on the subsample
  double bandwidth = 0.0;           // KDE bandwidth, 0: default_bandwidth
  double regularity_slack = 0.1;
  double decay_threshold = 10.0;
  double decay_max_ratio = 2.0;
  double space_eps = 1e-2;
  double wigner_x = 1e-8;
  double wigner_p = 1e-6;
  double husimi_min = -1e-12;
  double husimi_mass = 1e-6;
  double marginal = 0.05;           // alpha1 t = 0 p-marginal distance
  double oracle_l1 = 0.1;           // particle vs finite-volume L1 gap
  double oracle_refine = 1.5;       // gap reduction at one refinement
  double uniqueness = 1e-4;         // sup_t distance of two flow constructions

  bool operator==(const Tolerances&) const = default;
};

struct SweepLists {
  std::vector<double> deltas{1e-1, 1e-2, 1e-3};
  std::vector<double> R{0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> M{0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};

  bool operator==(const SweepLists&) const = default;
};

/// Coulomb sweep for the decay statistic: samples with x0 >= x_min.
struct DecaySpec {
  std::string field = "coulomb(k=1)";
  std::size_t count = 5;
  double x_min = 1.5;
  double x_max = 3.0;
  double p_abs = 0.75;
  double beta = 2.0;
  double radius = 10.0;
  double L = 26.0;  // box half-width; 0 keeps the ballistic estimate

  bool operator==(const DecaySpec&) const = default;
};

/// Particle vs finite-volume comparison and the two-construction check.
struct OracleSpec {
  Vec center{1.0, 0.0};
  double sigma = 0.5;
  std::vector<std::size_t> cells{128, 256};  // per axis, coarse then refined
  double dt = 0.01;
  double alt_dt = 2.5e-3;
  std::size_t samples = 256;
  std::size_t alt_samples = 86;
  std::size_t cloud = 2000;

  bool operator==(const OracleSpec&) const = default;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string field = "harmonic(omega=1)";
  std::size_t n = 1;
  double T = 1.0;
  EnsembleSpec ensemble;
  GridSpecConfig grid;
  GridSpecConfig kde_grid{{{-4.5, -4.5}, {4.5, 4.5}}, {90, 90}};
  std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
  double alpha = 0.5;
  EnvelopeSpec envelope;
  double p0 = 1.0;
  FlowSpec flow;
  QuantumSpec quantum;
  DictionarySpec dictionary;
  Tolerances tolerances;
  SweepLists sweeps;
  DecaySpec decay;
  OracleSpec oracle;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Names of the registered pipelines.
const std::vector<std::string>& registered_experiments();

/// Full config with every default expanded.
nlohmann::json to_json(const ExperimentConfig& c);
/// Strict parse: unknown keys, missing seed, unknown experiment or invalid
/// field specs throw ParameterError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Per-stage outcome; every stage is present, either with data or skipped.
struct StageReport {
  std::string name;
  std::string status;  // "ok", "skipped" or "error"
  std::string reason;
  bool pass = false;
  nlohmann::json data;
  double seconds = 0.0;  // wall time of the stage
};

struct RunRecord {
  nlohmann::json config;  // resolved config
  std::string experiment;
  std::vector<StageReport> stages;
  double wall_time = 0.0;
  std::string version;

  bool pass() const;
  const StageReport* stage(const std::string& name) const;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

/// Version stamp written into every record.
std::string version_stamp();

/// Output directory of a config: RLF_LAB_OUTPUT_ROOT / output_dir for
/// relative paths when the variable is set; "runs/<experiment>" by default.
std::filesystem::path resolve_output_dir(const ExperimentConfig& c);

/// Runs the pipeline without touching the filesystem.
RunRecord execute(const ExperimentConfig& config);

/// Runs the pipeline and writes record.json, config.json and the plot data
/// into the resolved output directory. Validation errors are raised before
/// anything is written.
RunRecord run_experiment(const ExperimentConfig& config);

/// Per-figure CSVs, README.md and manifest.json into `dir`. Returns the
/// written file names (manifest last). Missing or failed stages are listed
/// as gaps in the manifest.
std::vector<std::string> emit_plotdata(const RunRecord& record, const std::filesystem::path& dir);

}  // namespace rlf::harness
