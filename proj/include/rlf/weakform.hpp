#pragma once

// Distributional residuals of the phase-space continuity equation, an upwind
// finite-volume solver for its density form, and finite-sweep statistics for
// the stability hypotheses (uniform regularity, decay away from S, space and
// time tightness, limit continuity equation) plus the stability gap.

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "rlf/fields.hpp"
#include "rlf/measures.hpp"

namespace rlf::weakform {

using fields::PhaseSpaceField;
using fields::SingularSet;
using measures::GridDensity;
using measures::GridSpec;
using measures::MeasureCurve;
using measures::ParticleMeasure;
using measures::TestFunction;
using measures::TestFunctionDictionary;

inline constexpr double kDefaultMargin = 0.05;

/// C-infinity bump on (a, b): exp(1 - 1/(1 - s^2)), s = (2t - a - b)/(b - a).
struct TimeTestFunction {
  double a = 0.0;
  double b = 1.0;

  double value(double t) const;
  double derivative(double t) const;
};

/// Throws ParameterError unless the x-projection of phi's support keeps
/// distance >= margin from S.
void check_support_margin(const TestFunction& phi, const SingularSet& S, std::size_t n, double margin);

/// t -> int phi d mu_t on the curve grid.
std::vector<double> pairing_series(const MeasureCurve& curve, const TestFunction& phi);

/// |int_0^T [theta'(t) <phi, mu_t> + theta(t) <b . grad phi, mu_t>] dt|,
/// trapezoid rule on the curve grid.
double weak_residual(const MeasureCurve& curve, const PhaseSpaceField& b, const TestFunction& phi,
                     const TimeTestFunction& theta, double margin = kDefaultMargin);

/// sup_k weak_distance(a_k, b_k); the curves must share their time grid.
double sup_weak_distance(const MeasureCurve& a, const MeasureCurve& b, const TestFunctionDictionary& dict);

/// Slices of `curve` at the given times (each must be a grid time to 1e-12).
MeasureCurve restrict_to_times(const MeasureCurve& curve, const std::vector<double>& times);

// ----------------------------------------------------------------------------
// Upwind finite volumes for d_t w + div(b w) = 0 on a phase-space grid.
// ----------------------------------------------------------------------------
struct GridCurve {
  GridSpec grid;
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // density per cell, per time
  std::vector<double> outflow;              // cumulative outflow mass per time
  double initial_mass = 0.0;
  double dt = 0.0;                          // step actually used
  std::size_t steps = 0;

  GridDensity density(std::size_t k) const;
  double mass(std::size_t k) const;
};

struct FiniteVolumeOptions {
  double cfl = 0.45;
  double dt = 0.0;                 // 0: derived from cfl
  double margin = kDefaultMargin;  // grid box must keep this distance from S
};

/// First-order unsplit upwind scheme with outflow boundaries. Face velocities
/// are p on x-faces and c(x) on p-faces, so the discrete divergence vanishes.
/// Output on `times` (must start at 0, increasing).
GridCurve solve_functional_continuity(const GridDensity& w0, const PhaseSpaceField& b,
                                      const std::vector<double>& times,
                                      const FiniteVolumeOptions& opts = {});

/// sum |a - b| * cell volume; the grids must coincide.
double l1_distance(const GridDensity& a, const GridDensity& b);

// ----------------------------------------------------------------------------
// Families of curves and hypothesis statistics
// ----------------------------------------------------------------------------
/// Curves indexed by samples w with probability weights P(w).
struct CurveFamily {
  std::vector<double> weights;
  std::vector<MeasureCurve> curves;
  std::string label;

  std::size_t size() const { return curves.size(); }
};

struct RegularityStat {
  double value = 0.0;  // sup_{t, phi} sum_w P(w) <phi, mu(t, w)> / int phi
  double bound = 0.0;
  double slack = 0.0;
  double worst_time = 0.0;
  std::size_t worst_function = 0;
  bool pass = false;
};

/// phi set: nonnegative functions with known Lebesgue integral.
RegularityStat uniform_regularity_stat(const CurveFamily& family, const std::vector<TestFunction>& phis,
                                       double C, double slack = 0.1);

struct DecayStat {
  double beta = 2.0;
  double radius = kInf;
  std::vector<double> deltas;
  std::vector<std::vector<double>> values;  // [delta][family index n]
  double value = 0.0;      // sup over delta of the last-n values
  double stability = 0.0;  // max/min over delta of the last-n values
  double threshold = 0.0;
  double max_ratio = 2.0;
  bool pass = false;
};

/// P-, time- and B_R-averaged decay_integrand for each (delta, n).
DecayStat decay_stat(const std::vector<CurveFamily>& families, double beta,
                     const std::vector<double>& deltas, double R, const SingularSet& S,
                     double threshold = kInf, double max_ratio = 2.0);

struct SweepStat {
  std::string parameter;
  std::vector<double> sweep;
  std::vector<double> fractions;
  std::vector<double> member_values;  // sup-escape mass or total variation per member
  double threshold = 0.0;
  bool pass = false;
};

/// Fraction (in P) of members with sup_t mu(t)(outside B_R) > eps, per R.
SweepStat space_tightness_stat(const CurveFamily& family, double eps, const std::vector<double>& R_list,
                               double threshold = 0.0);

/// Fraction (in P) of members with max_phi int_0^T |d/dt <phi, mu_t>| dt > M,
/// derivatives by central differences.
SweepStat time_tightness_stat(const CurveFamily& family, const std::vector<TestFunction>& phis,
                              const std::vector<double>& M_list, double threshold = 0.0);

/// Total variation of t -> <phi, mu_t> with central differences (one-sided
/// second order at the ends) and trapezoid quadrature.
double time_variation(const MeasureCurve& curve, const TestFunction& phi);

struct LimitContinuityStat {
  std::vector<double> values;  // per family index n
  double floor = 0.0;
  bool pass = false;
};

/// For each n: max over (phi, theta) of the P-average of weak_residual.
/// Pass iff the sequence decreases (values below `floor` count as equal).
LimitContinuityStat limit_continuity_stat(const std::vector<CurveFamily>& families,
                                          const PhaseSpaceField& b,
                                          const std::vector<TestFunction>& phis,
                                          const std::vector<TimeTestFunction>& thetas,
                                          double floor = 0.0, double margin = kDefaultMargin);

/// sum_w P(w) sup_t weak_distance(family_w(t), reference_w(t)).
double stability_gap(const CurveFamily& family, const CurveFamily& reference,
                     const TestFunctionDictionary& dict);

struct StabilityReport {
  RegularityStat regularity;
  DecayStat decay;
  SweepStat space_tightness;
  SweepStat time_tightness;
  LimitContinuityStat limit_continuity;
  std::vector<double> gaps;  // stability gap per family index n
  bool pass() const;
};

nlohmann::json to_json(const RegularityStat& s);
nlohmann::json to_json(const DecayStat& s);
nlohmann::json to_json(const SweepStat& s);
nlohmann::json to_json(const LimitContinuityStat& s);
nlohmann::json to_json(const StabilityReport& r);

}  // namespace rlf::weakform
