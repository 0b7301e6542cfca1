#include <cmath>
#include <numbers>

#include "doctest.h"
#include "rlf/fields.hpp"
#include "rlf/flow.hpp"
#include "rlf/weakform.hpp"

using namespace rlf;
using namespace rlf::weakform;

namespace {

std::shared_ptr<const fields::PhaseSpaceField> field(const std::string& spec) {
  return std::make_shared<const fields::PhaseSpaceField>(fields::make_field(spec));
}

measures::ParticleMeasure gaussian_cloud(double cx, double cp, double s, std::size_t m) {
  measures::ParticleMeasure mu(2);
  const double h = 8.0 * s / static_cast<double>(m);
  double total = 0.0;
  std::vector<double> w;
  std::vector<Vec> z;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double x = cx - 4 * s + (i + 0.5) * h, p = cp - 4 * s + (j + 0.5) * h;
      w.push_back(std::exp(-((x - cx) * (x - cx) + (p - cp) * (p - cp)) / (2 * s * s)));
      z.push_back({x, p});
      total += w.back();
    }
  }
  for (std::size_t i = 0; i < w.size(); ++i) mu.add(z[i], w[i] / total);
  return mu;
}

MeasureCurve curve_on(const std::string& spec, const measures::ParticleMeasure& mu, double T, std::size_t samples) {
  flow::StepControl c;
  c.dt = 1e-3;
  c.samples = samples;
  return flow::superpose(flow::flow_map(field(spec), mu, T, c), mu);
}

measures::GridDensity gaussian_density(const measures::GridSpec& grid, double cx, double cp, double s) {
  measures::GridDensity w{grid, std::vector<double>(grid.total_cells()), 0.0};
  for (std::size_t i = 0; i < grid.total_cells(); ++i) {
    const auto z = grid.cell_center(i);
    w.values[i] = std::exp(-((z[0] - cx) * (z[0] - cx) + (z[1] - cp) * (z[1] - cp)) / (2 * s * s)) /
                  (2 * std::numbers::pi * s * s);
  }
  return w;
}

}  // namespace

TEST_CASE("time bump") {
  const TimeTestFunction th{0.0, 2.0};
  CHECK(th.value(1.0) == doctest::Approx(1.0));
  CHECK(th.value(0.0) == 0.0);
  CHECK(th.value(2.5) == 0.0);
  const double h = 1e-6;
  for (double t : {0.3, 0.9, 1.6}) {
    CHECK(th.derivative(t) == doctest::Approx((th.value(t + h) - th.value(t - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("free superposition curve satisfies the weak form") {
  const auto mu = gaussian_cloud(0.0, 0.5, 0.4, 20);
  const auto curve = curve_on("free", mu, 1.0, 257);
  const auto b = fields::make_field("free");
  const auto phi = measures::bump_function({0.3, 0.4}, {1.2, 1.0});
  CHECK(weak_residual(curve, b, phi, {0.0, 1.0}) <= 1e-6);
  CHECK(weak_residual(curve, b, phi, {0.2, 0.7}) <= 1e-6);
}

TEST_CASE("a frozen curve violates the weak form under the harmonic field") {
  const auto mu = gaussian_cloud(0.5, 0.0, 0.3, 16);
  MeasureCurve frozen;
  for (int k = 0; k <= 64; ++k) {
    frozen.times.push_back(k / 64.0);
    frozen.slices.push_back(mu);
  }
  const auto b = fields::make_field("harmonic(omega=1)");
  const auto phi = measures::bump_function({0.5, 0.4}, {1.0, 1.0});
  CHECK(weak_residual(frozen, b, phi, {0.0, 1.0}) > 1e-2);
}

TEST_CASE("weak residual refuses test functions touching S and needs gradients") {
  const auto mu = gaussian_cloud(2.0, 0.0, 0.1, 4);
  const auto curve = curve_on("coulomb(k=1)", mu, 0.5, 9);
  const auto b = fields::make_field("coulomb(k=1)");
  CHECK_THROWS_AS(weak_residual(curve, b, measures::bump_function({0.0, 0.0}, {1.0, 1.0}), {0.0, 0.5}), ParameterError);
  CHECK_NOTHROW(weak_residual(curve, b, measures::bump_function({2.0, 0.0}, {1.0, 1.0}), {0.0, 0.5}));
  const auto nograd = measures::make_test_function(2, [](std::span<const double> z) { return z[0]; });
  CHECK_THROWS(weak_residual(curve, b, nograd, {0.0, 0.5}));
}

TEST_CASE("finite volumes transport a Gaussian under the free field") {
  const auto b = fields::make_field("free");
  std::vector<double> gaps;
  for (std::size_t m : {64, 128, 256}) {
    const measures::GridSpec grid(Box::cube(2, -3.0, 3.0), {m, m});
    const auto w0 = gaussian_density(grid, -0.5, 0.5, 0.5);
    const auto wt = solve_functional_continuity(w0, b, {0.0, 1.0});
    // Exact sheared density w0(x - p, p).
    measures::GridDensity exact{grid, std::vector<double>(grid.total_cells()), 0.0};
    for (std::size_t i = 0; i < grid.total_cells(); ++i) {
      const auto z = grid.cell_center(i);
      const double x = z[0] - z[1] + 0.5, p = z[1] - 0.5;
      exact.values[i] = std::exp(-(x * x + p * p) / 0.5) / (2 * std::numbers::pi * 0.25);
    }
    gaps.push_back(l1_distance(wt.density(1), exact));
    CHECK(wt.mass(1) + wt.outflow[1] == doctest::Approx(wt.initial_mass).epsilon(1e-12));
  }
  CHECK(gaps[1] <= 0.05);
  CHECK(gaps[2] < gaps[1]);
  CHECK(gaps[1] < gaps[0]);
}

TEST_CASE("finite volumes reject a dt violating CFL") {
  const auto b = fields::make_field("harmonic(omega=1)");
  const measures::GridSpec grid(Box::cube(2, -3.0, 3.0), {32, 32});
  const auto w0 = gaussian_density(grid, 0.0, 0.0, 0.5);
  FiniteVolumeOptions o;
  o.dt = 1.0;
  CHECK_THROWS_AS(solve_functional_continuity(w0, b, {0.0, 1.0}, o), NumericalError);
}

TEST_CASE("space tightness vanishes beyond the a priori support bound") {
  CurveFamily fam;
  double zmax = 0.0;
  for (int j = 0; j < 4; ++j) {
    const auto mu = gaussian_cloud(0.5 * j - 0.5, 0.2, 0.1, 6);
    for (std::size_t i = 0; i < mu.size(); ++i) zmax = std::max(zmax, norm2(mu.point(i)));
    fam.curves.push_back(curve_on("harmonic(omega=1)", mu, 1.0, 17));
    fam.weights.push_back(0.25);
  }
  // Harmonic flow preserves |z|, so B_R with R >= max |z0| holds everything.
  const auto s = space_tightness_stat(fam, 1e-12, {0.1, zmax + 1e-9, 2 * zmax});
  CHECK(s.fractions[1] == 0.0);
  CHECK(s.fractions[2] == 0.0);
  CHECK(s.fractions[0] > 0.0);
}

TEST_CASE("limit continuity on exact superposition families is at quadrature level") {
  std::vector<CurveFamily> fams;
  for (int n = 0; n < 3; ++n) {
    CurveFamily fam;
    fam.curves.push_back(curve_on("harmonic(omega=1)", gaussian_cloud(0.5 / (n + 1), 0.0, 0.3, 12), 1.0, 129));
    fam.weights.push_back(1.0);
    fams.push_back(fam);
  }
  const auto b = fields::make_field("harmonic(omega=1)");
  const auto phis = measures::default_dictionary(Box::cube(2, -2.0, 2.0), 2).functions;
  const auto s = limit_continuity_stat(fams, b, phis, {{0.0, 1.0}}, 1e-6);
  for (double v : s.values) CHECK(v <= 1e-6);
  CHECK(s.pass);
}

TEST_CASE("regularity statistic of a Liouville family equals its initial bound") {
  CurveFamily fam;
  fam.curves.push_back(curve_on("harmonic(omega=1)", gaussian_cloud(0.0, 0.0, 0.5, 24), 1.0, 9));
  fam.weights.push_back(1.0);
  const auto phis = measures::default_dictionary(Box::cube(2, -2.0, 2.0), 3).functions;
  // Isotropic Gaussian is invariant under the rotation.
  const auto r0 = uniform_regularity_stat(fam, phis, kInf);
  const double C = r0.value;
  const auto r = uniform_regularity_stat(fam, phis, C, 0.1);
  CHECK(r.pass);
  CHECK_FALSE(uniform_regularity_stat(fam, phis, 0.5 * C, 0.1).pass);
}

TEST_CASE("decay statistic is stable in delta away from the singularity") {
  CurveFamily fam;
  fam.curves.push_back(curve_on("coulomb(k=1)", gaussian_cloud(2.0, 0.0, 0.2, 8), 1.0, 9));
  fam.weights.push_back(1.0);
  const auto S = fields::SingularSet::points({{0.0}});
  const auto d = decay_stat({fam}, 2.0, {1e-1, 1e-2, 1e-3}, 10.0, S, 10.0, 2.0);
  CHECK(d.pass);
  CHECK(d.stability < 1.1);
  CHECK(d.values.size() == 3);
}
