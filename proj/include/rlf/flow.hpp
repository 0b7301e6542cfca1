#pragma once

// Trajectories of z' = b(z), flow maps over particle clouds, the two checkable
// conditions of a regular Lagrangian flow (integral-solution residual and the
// density bound on pushforwards), and the superposition solution
// mu_t = sum_i w_i delta_{X(t, x_i)}.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlf/common.hpp"
#include "rlf/fields.hpp"
#include "rlf/measures.hpp"

namespace rlf::flow {

using fields::PhaseSpaceField;
using measures::MeasureCurve;
using measures::ParticleMeasure;

struct StepControl {
  double dt = 1e-3;             // base RK4 step
  double guard = 0.1;           // step <= guard * dist(x, S) / max(|p|, |c(x)|, 1e-9)
  double min_dist = 1e-4;       // dist(x, S) below this ends the trajectory (singular_hit)
  double min_step = 1e-12;      // floor on the guarded step
  double escape_radius = kInf;  // |z| beyond this ends the trajectory (escaped)
  double max_invalid = 1e-3;    // tolerated invalid mass fraction of a flow map
  std::size_t samples = 256;    // shared output grid size on [0, T]
};

enum class Status { complete, singular_hit, escaped };

std::string to_string(Status s);

struct Trajectory {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> states;  // row-major, times.size() x dim
  std::vector<double> rates;   // b(state) per node (may be empty)
  Status status = Status::complete;
  double event_time = kInf;    // time of singular hit / escape
  double min_singular_dist = kInf;

  std::size_t size() const { return times.size(); }
  std::span<const double> state(std::size_t k) const { return {states.data() + k * dim, dim}; }
  std::span<const double> rate(std::size_t k) const { return {rates.data() + k * dim, dim}; }
  /// Cubic Hermite dense output; requires rates.
  Vec at(double t) const;
};

/// n+1 equispaced samples on [0, T] with the endpoint hit exactly.
std::vector<double> uniform_times(double T, std::size_t samples);

/// Explicit RK4 with a singularity guard; every accepted step is stored.
/// Throws SingularError if dist(x0, S) == 0 and NumericalError on non-finite
/// field values.
Trajectory integrate_trajectory(const PhaseSpaceField& b, std::span<const double> z0, double T,
                                const StepControl& ctrl);

/// Same integrator, but states are emitted only at `output_times` (cubic
/// Hermite between accepted steps). Output stops at the event time for
/// incomplete trajectories.
Trajectory integrate_sampled(const PhaseSpaceField& b, std::span<const double> z0, double T,
                             const StepControl& ctrl, const std::vector<double>& output_times);

/// Hermite resampling of a trajectory with rates onto new times within its span.
Trajectory resample(const Trajectory& traj, const std::vector<double>& times);

/// max_k |X(t_k) - X(0) - int_0^{t_k} b(X(s)) ds|, integral by piecewise
/// quadratic (Simpson) quadrature on the trajectory grid.
double ode_residual(const Trajectory& traj, const PhaseSpaceField& b);

// ----------------------------------------------------------------------------
// FlowMap
// ----------------------------------------------------------------------------
struct FlowMap {
  ParticleMeasure base;
  std::vector<double> times;  // shared grid
  double horizon = 0.0;
  std::shared_ptr<const PhaseSpaceField> field;
  std::vector<double> states;  // trajectory x time x dim
  std::vector<Status> status;
  std::vector<double> event_time;
  std::vector<double> min_singular_dist;
  double invalid_mass = 0.0;

  std::size_t dim() const { return base.dim(); }
  std::size_t size() const { return base.size(); }
  std::size_t samples() const { return times.size(); }
  bool valid(std::size_t i) const { return status[i] == Status::complete; }
  std::span<const double> state(std::size_t i, std::size_t k) const {
    return {states.data() + (i * samples() + k) * dim(), dim()};
  }
  double invalid_fraction() const;
  /// Trajectory i on the shared grid (rates recomputed from the field).
  Trajectory trajectory(std::size_t i) const;
  /// X(t_k, .)_# base restricted to complete trajectories.
  ParticleMeasure slice(std::size_t k) const;
};

FlowMap flow_map(std::shared_ptr<const PhaseSpaceField> b, const ParticleMeasure& nu, double T,
                 const StepControl& ctrl);

struct RlfCheckOptions {
  std::size_t residual_subsample = 64;
  double residual_tol = 1e-6;
  double slack = 0.1;
  std::size_t slices = 5;
  std::uint64_t seed = 1;
};

struct SliceDensityCheck {
  double time = 0.0;
  double max_density = 0.0;
  double spill = 0.0;
  bool pass = false;
};

struct RlfReport {
  double max_residual = 0.0;
  std::size_t residual_checked = 0;
  bool residual_pass = false;
  std::vector<SliceDensityCheck> slices;
  double invalid_fraction = 0.0;
  bool pass = false;
};

RlfReport check_rlf(const FlowMap& F, double C, const measures::GridSpec& grid, double bandwidth,
                    const RlfCheckOptions& opts = {});

/// mu_t with mu given as weights on F's base cloud.
MeasureCurve superpose(const FlowMap& F, std::span<const double> weights);
/// mu_t with mu given as a measure supported on base points (matched exactly).
MeasureCurve superpose(const FlowMap& F, const ParticleMeasure& mu);

struct EnsembleFlow {
  FlowMap flow;
  std::vector<double> weights;
  std::vector<MeasureCurve> curves;

  /// E(mu(t_k, .)_# nu) as a particle measure.
  ParticleMeasure expectation_slice(std::size_t k) const;
};

/// One flow map on the union of member supports, then superposition per member.
EnsembleFlow measure_flow(std::shared_ptr<const PhaseSpaceField> b,
                          const measures::MeasureEnsemble& nu, double T, const StepControl& ctrl);

}  // namespace rlf::flow
