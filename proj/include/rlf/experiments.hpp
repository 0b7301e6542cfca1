#pragma once

// eps-sweeps comparing Husimi measures of Schroedinger solutions with the
// classical flow of measures on the time interval [-T, T], and the stability
// hypothesis statistics evaluated on the resulting Husimi families.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rlf/fields.hpp"
#include "rlf/flow.hpp"
#include "rlf/measures.hpp"
#include "rlf/quantum.hpp"
#include "rlf/transforms.hpp"
#include "rlf/weakform.hpp"

namespace rlf::quantum {

struct QuantumNumerics {
  std::size_t N = 4096;
  double L = 0.0;                 // 0: ballistic estimate from the classical reference
  double dt = 1e-3;               // Strang step bound
  HusimiOptions husimi;
  double threshold = 1e-8;        // husimi_to_measure cut, relative to the peak
  bool check_transforms = true;
  std::size_t wigner_stride = 1;  // Wigner identities on every k-th time slice
  double alias_tol = 1e-6;        // Wigner momentum-range guard
};

/// Phase-space sample points with probability weights.
struct SampleSet {
  std::vector<Vec> points;  // (x0, p0)
  std::vector<double> weights;

  std::size_t size() const { return points.size(); }
};

/// `count` uniform draws in `box` (seeded), weights proportional to rho.
SampleSet weighted_samples(const measures::ScalarFn& rho, const Box& box, std::size_t count, std::uint64_t seed);

/// Grid times of the sweep: -T .. T with `per_direction` samples on each side
/// (t = 0 shared); T = 0 gives the single time 0.
std::vector<double> forward_times(double T, std::size_t per_direction);
std::vector<double> symmetric_times(double T, std::size_t per_direction);

/// Classical curves on [-T, T] for every member: forward by measure_flow,
/// backward as R X(t, R z) with R(x, p) = (x, -p).
weakform::CurveFamily classical_family(std::shared_ptr<const fields::PhaseSpaceField> b,
                                       const measures::MeasureEnsemble& members, double T,
                                       std::size_t per_direction, const flow::StepControl& ctrl);

struct TransformSummary {
  std::size_t states = 0;
  std::size_t wigner_states = 0;
  std::size_t wigner_failures = 0;  // states rejected by the momentum-range guard
  double max_norm_drift = 0.0;
  double max_wigner_x_error = 0.0;
  double max_wigner_p_error = 0.0;
  double max_wigner_imag = 0.0;
  double min_husimi = kInf;
  double max_husimi_mass_error = 0.0;
  double max_boundary_amplitude = 0.0;
  double max_datum_correction = 0.0;
  double seconds = 0.0;             // wall time spent in the Wigner and Husimi checks

  void merge(const TransformSummary& o);
};

struct CellResult {
  double eps = 0.0;
  std::size_t sample = 0;
  bool ok = false;
  std::string reason;
  std::vector<double> distances;  // per time of the sweep grid
  double sup_forward = 0.0;
  double sup_backward = 0.0;
  TransformSummary transforms;
};

struct SweepResult {
  std::vector<double> times;
  std::vector<double> eps_list;
  std::vector<double> D;           // sum_w P(w) sup_{t in [-T, T]} distance
  std::vector<double> D_forward;   // sup over t in [0, T]
  std::vector<double> D_backward;  // sup over t in [-T, 0]
  std::vector<std::vector<CellResult>> cells;  // [eps][sample]
  std::vector<weakform::CurveFamily> families; // Husimi curves per eps
  weakform::CurveFamily reference;
  std::vector<Grid1D> grids;                   // per eps
  std::vector<double> clamp_radii;             // per eps (0 without Coulomb part)
  TransformSummary transforms;
  std::vector<std::string> warnings;

  bool all_ok() const;
};

/// Builds psi_0 for sample w at scale eps on the given grid.
using DatumBuilder = std::function<WaveFunction(double eps, std::size_t sample, const Grid1D& grid)>;

struct SweepSpec {
  fields::Potential U;
  std::vector<double> eps_list;
  double T = 1.0;
  std::size_t per_direction = 41;
  QuantumNumerics numerics;
  measures::TestFunctionDictionary dict;
  double envelope_reach = 1.0;  // spatial half-width of the datum at eps = 1
  double alpha = 0.5;
  std::vector<Vec> centers;     // (x0, p0) per sample, for grid sizing
};

/// Runs every (eps, sample) cell in parallel and compares each Husimi curve
/// with the matching reference curve.
SweepResult run_sweep(const SweepSpec& spec, const DatumBuilder& datum, weakform::CurveFamily reference);

// ----------------------------------------------------------------------------
// Experiments
// ----------------------------------------------------------------------------
struct SemiclassicalConfig {
  fields::Potential U;
  Envelope phi0 = Envelope::bump(2.0);
  double alpha = 0.5;
  std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
  SampleSet samples;
  double T = 1.0;
  std::size_t per_direction = 41;
  QuantumNumerics numerics;
  Box dict_box = Box::cube(2, -4.0, 4.0);
  int dict_levels = 3;
  flow::StepControl flow;
};

SweepResult semiclassical_experiment(const SemiclassicalConfig& cfg);

struct Alpha1Config {
  fields::Potential U;
  Envelope phi0 = Envelope::bump(4.0);
  std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
  measures::GridSpec x_grid;   // cell centres are the x0 samples
  measures::ScalarFn rho;      // weights rho(x0) * cell volume, normalized
  double p0 = 1.0;
  double T = 1.0;
  std::size_t per_direction = 41;
  QuantumNumerics numerics;
  double gamma_halfwidth = 8.0;
  std::size_t gamma_points = 401;
  Box dict_box = Box::cube(2, -4.0, 4.0);
  int dict_levels = 3;
  flow::StepControl flow;
};

struct Alpha1Result {
  SweepResult sweep;
  measures::ParticleMeasure gamma;          // discretized |hat phi0|^2(. - p0), 1D
  std::vector<double> marginal_distance;    // per eps: t = 0 Husimi p-marginal vs gamma
  std::vector<double> x_variance;           // per eps: t = 0 Husimi x-variance (weighted)
  std::vector<std::string> warnings;
};

/// Discretized |hat phi0|^2(p - p0) on `points` nodes over p0 +- halfwidth.
measures::ParticleMeasure momentum_profile(const Envelope& phi0, double p0, double halfwidth, std::size_t points);

Alpha1Result alpha1_experiment(const Alpha1Config& cfg);

// ----------------------------------------------------------------------------
// Hypothesis statistics on Husimi families
// ----------------------------------------------------------------------------
struct HypothesisConfig {
  double regularity_slack = 0.1;
  double beta = 2.0;
  std::vector<double> deltas{1e-1, 1e-2, 1e-3};
  double decay_radius = 10.0;
  double decay_threshold = 10.0;
  double decay_max_ratio = 2.0;
  double space_eps = 1e-2;
  std::vector<double> R_list{0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> M_list{0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
  int test_level = 2;  // dictionary level of the regularity, time-tightness and limit-continuity test functions
};

struct HypothesisReport {
  double C = 0.0;  // regularity constant of the classical reference family
  std::vector<weakform::RegularityStat> regularity;    // per eps
  weakform::DecayStat decay;
  std::vector<weakform::SweepStat> space_tightness;    // per eps
  std::vector<weakform::SweepStat> time_tightness;     // per eps
  weakform::LimitContinuityStat limit_continuity;      // over eps
  double limit_baseline = 0.0;                         // reference-family residual
  std::vector<double> gaps;                            // stability gap per eps
  bool regularity_pass = false;
  bool decay_pass = false;
  bool space_pass = false;
  bool time_pass = false;
  bool limit_pass = false;

  bool pass() const { return regularity_pass && decay_pass && space_pass && time_pass && limit_pass; }
  /// Summary in the StabilityReport shape, using the finest eps.
  weakform::StabilityReport summary() const;
};

/// Test functions of one dictionary level.
std::vector<measures::TestFunction> dictionary_level(const Box& box, int level);

HypothesisReport hypothesis_statistics(const SweepResult& main, const fields::PhaseSpaceField& b,
                                       const SweepResult& decay_sweep, const fields::SingularSet& S,
                                       const Box& dict_box, const measures::TestFunctionDictionary& dict,
                                       const HypothesisConfig& cfg);

}  // namespace rlf::quantum
