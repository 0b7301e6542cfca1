#pragma once

// Finite measures on R^d represented as weighted particle clouds, measures on
// the space of probability measures represented as weighted ensembles, grid
// densities for bound checks, and a bounded dual metric built from a
// dictionary of smooth compactly supported test functions.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rlf/common.hpp"

namespace rlf::measures {

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;
using MapFn = std::function<Vec(std::span<const double>)>;

// ----------------------------------------------------------------------------
// ParticleMeasure: sum_i w_i delta_{x_i}, w_i >= 0.
// ----------------------------------------------------------------------------
class ParticleMeasure {
 public:
  ParticleMeasure() = default;
  explicit ParticleMeasure(std::size_t dim);
  /// coords is row-major, size() == weights.size() * dim.
  ParticleMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights);

  static ParticleMeasure dirac(std::span<const double> x, double weight = 1.0);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * dim_, dim_};
  }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& coords() const { return coords_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Fixed-order sum of the weights.
  double total_mass() const;
  bool is_probability(double tol = 1e-12) const;

  void add(std::span<const double> x, double weight);
  ParticleMeasure scaled(double factor) const;

  bool operator==(const ParticleMeasure&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

/// a*mu + b*nu as a particle cloud (concatenation with rescaled weights).
ParticleMeasure combine(double a, const ParticleMeasure& mu, double b, const ParticleMeasure& nu);

// ----------------------------------------------------------------------------
// Test functions
// ----------------------------------------------------------------------------
struct TestFunction {
  std::size_t dim = 0;
  ScalarFn value;
  GradientFn gradient;  // empty when unavailable
  Box support;          // evaluations vanish outside
  double sup_bound = 1.0;
  double integral = std::numeric_limits<double>::quiet_NaN();  // Lebesgue integral, NaN if unknown

  double operator()(std::span<const double> x) const { return value(x); }
};

/// Wraps an arbitrary scalar function (unbounded support, unknown sup).
TestFunction make_test_function(std::size_t dim, ScalarFn fn, double sup_bound = 1.0);

/// Tensor product of C-infinity bumps exp(1 - 1/(1 - s^2)), s = (x_i - c_i)/r_i.
/// Peak value 1 at the center, support [c - r, c + r].
TestFunction bump_function(Vec center, Vec radius);

/// Integral of the 1D unit bump exp(1 - 1/(1 - s^2)) over [-1, 1].
double unit_bump_integral();

struct TestFunctionDictionary {
  std::vector<TestFunction> functions;

  std::size_t size() const { return functions.size(); }
  std::size_t dim() const { return functions.empty() ? 0 : functions.front().dim; }
};

/// Bumps on the reference box at `levels` dyadic scales, coarse to fine.
/// Level l splits every axis into 2^l cells; each cell contributes a bump at
/// its center with radius equal to the cell width.
TestFunctionDictionary default_dictionary(const Box& reference, int levels = 3);

// ----------------------------------------------------------------------------
// Pairings, pushforward, distances
// ----------------------------------------------------------------------------
double integrate_test(const ParticleMeasure& mu, const TestFunction& phi);

/// Points mapped through T; weights untouched. A throwing T is reported with
/// the offending particle index.
ParticleMeasure pushforward(const ParticleMeasure& mu, const MapFn& T);

/// sum_k 2^-k min(1, |<phi_k, mu - nu>| / sup_k), k = 1..K.
double weak_distance(const ParticleMeasure& mu, const ParticleMeasure& nu,
                     const TestFunctionDictionary& dict);

// ----------------------------------------------------------------------------
// Grid densities
// ----------------------------------------------------------------------------
struct GridSpec {
  Box box;
  std::vector<std::size_t> cells;  // per axis

  GridSpec() = default;
  GridSpec(Box box_, std::vector<std::size_t> cells_);
  static GridSpec uniform(const Box& box, std::size_t cells_per_axis);

  std::size_t dim() const { return box.dim(); }
  std::size_t total_cells() const;
  double cell_width(std::size_t axis) const;
  double cell_volume() const;
  Vec cell_center(std::size_t flat) const;
  /// Flat index of multi-index (axis 0 slowest).
  std::size_t flat_index(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> multi_index(std::size_t flat) const;
};

struct GridDensity {
  GridSpec grid;
  std::vector<double> values;  // mass per unit volume, one per cell
  double spill = 0.0;          // mass that fell outside the box

  double integral() const;
  double max_value() const;
};

/// Cell-averaged Gaussian kernel density: each particle contributes the exact
/// Gaussian mass of every cell, so integral() == total mass - spill.
GridDensity density_estimate(const ParticleMeasure& mu, const GridSpec& grid, double bandwidth);

/// Mean distance from each particle to its nearest neighbour.
double mean_nearest_neighbor_spacing(const ParticleMeasure& mu);

/// Default bandwidth: twice the mean nearest-neighbour spacing.
double default_bandwidth(const ParticleMeasure& mu);

struct DensityBoundReport {
  double max_density = 0.0;
  double bound = 0.0;  // C
  double slack = 0.0;
  bool pass = false;
};

DensityBoundReport check_density_bound(const GridDensity& rho, double C, double slack = 0.1);

// ----------------------------------------------------------------------------
// Ensembles (measures on P(R^d))
// ----------------------------------------------------------------------------
struct MeasureEnsemble {
  std::vector<double> weights;
  std::vector<ParticleMeasure> members;

  std::size_t size() const { return members.size(); }
  std::size_t dim() const;
  double total_weight() const;
  void add(double weight, ParticleMeasure mu);
};

/// Flattened measure with weights ensemble_weight * member_weight.
ParticleMeasure expectation(const MeasureEnsemble& nu);

/// Law of x -> delta_x under rho dx, realized on the cell centers of `grid`
/// (quadrature weights rho(center) * cell volume). The grid box is the
/// truncation box for sigma-finite rho.
MeasureEnsemble dirac_ensemble(const ScalarFn& rho, const GridSpec& grid);

/// Monte Carlo variant: n uniform draws in `box` with weights rho(x) vol / n.
MeasureEnsemble dirac_ensemble(const ScalarFn& rho, const Box& box, std::size_t n,
                               std::uint64_t seed);

/// Law of x -> delta_x (x) gamma under rho dx on R^n; members live in R^{2n}.
/// Warnings (gamma not dominated by C L^n in the KDE sense) are appended to
/// `warnings` when provided.
MeasureEnsemble product_ensemble(const ScalarFn& rho, const GridSpec& x_grid,
                                 const ParticleMeasure& gamma,
                                 std::vector<std::string>* warnings = nullptr);

struct RegularityReport {
  DensityBoundReport bound;
  double spill = 0.0;
  bool spill_warning = false;
  bool pass = false;
};

RegularityReport check_regular(const MeasureEnsemble& nu, double C, const GridSpec& grid,
                               double bandwidth, double slack = 0.1);

// ----------------------------------------------------------------------------
// Measure curves t -> mu_t sampled on a shared time grid.
// ----------------------------------------------------------------------------
struct MeasureCurve {
  std::vector<double> times;
  std::vector<ParticleMeasure> slices;
  std::string provenance;
  double excluded_mass = 0.0;  // mass dropped because trajectories were invalid

  std::size_t dim() const { return slices.empty() ? 0 : slices.front().dim(); }
  /// Largest |mass(t) - mass(0)|.
  double mass_drift() const;
};

}  // namespace rlf::measures
