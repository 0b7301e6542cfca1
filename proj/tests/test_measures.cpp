#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rlf/measures.hpp"
#include "rlf/measures_io.hpp"

using namespace rlf;
using namespace rlf::measures;

namespace {

double gauss2(std::span<const double> z) { return std::exp(-(z[0] * z[0] + z[1] * z[1])); }

}  // namespace

TEST_CASE("seeded Monte Carlo integral of x on [0,1]") {
  const auto nu = dirac_ensemble([](std::span<const double>) { return 1.0; }, Box({0.0}, {1.0}), 1000, 42);
  const auto mu = expectation(nu);
  const auto phi = make_test_function(1, [](std::span<const double> x) { return x[0]; });
  const double v = integrate_test(mu, phi);
  CHECK(std::abs(v - 0.5) < 0.05);
  // Frozen from an independent MT19937-64 reference with u = x / 2^64.
  CHECK(v == doctest::Approx(0.4943938246985902).epsilon(1e-14));
}

TEST_CASE("pushforward satisfies the change of variables identity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    ParticleMeasure mu(2);
    for (int i = 0; i < 200; ++i) {
      const double z[2] = {u(rng), u(rng)};
      mu.add(z, 0.5 + 0.5 * u(rng));
    }
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const MapFn T = [=](std::span<const double> z) { return Vec{a * z[0] + b * std::sin(z[1]), c + d * z[0] * z[1]}; };
    const auto phi = bump_function({0.1 * u(rng), 0.1 * u(rng)}, {1.5, 1.5});
    const double lhs = integrate_test(pushforward(mu, T), phi);
    double rhs = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) rhs += mu.weight(i) * phi(T(mu.point(i)));
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("expectation of the Dirac ensemble reproduces rho dx") {
  const GridSpec grid(Box({-4.0, -4.0}, {4.0, 4.0}), {160, 160});
  const auto nu = dirac_ensemble(gauss2, grid);
  const auto mu = expectation(nu);
  const auto phi = bump_function({0.3, -0.2}, {1.0, 1.5});
  // Independent quadrature: tensor Gauss-Legendre-free midpoint rule on a finer grid.
  double ref = 0.0;
  const int m = 800;
  const double h = 8.0 / m;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double z[2] = {-4.0 + (i + 0.5) * h, -4.0 + (j + 0.5) * h};
      ref += phi(z) * gauss2(z) * h * h;
    }
  }
  CHECK(integrate_test(mu, phi) == doctest::Approx(ref).epsilon(1e-4));
  CHECK(nu.size() == grid.total_cells());
}

TEST_CASE("product ensemble marginals match rho and gamma") {
  const GridSpec xg(Box({-2.0}, {2.0}), {40});
  ParticleMeasure gamma(1);
  const double ps[3] = {-1.0, 0.0, 2.0};
  const double ws[3] = {0.2, 0.5, 0.3};
  for (int k = 0; k < 3; ++k) gamma.add(std::span<const double>(&ps[k], 1), ws[k]);
  const auto rho = [](std::span<const double> x) { return 1.0 + 0.5 * x[0]; };
  const auto nu = product_ensemble(rho, xg, gamma);
  const auto mu = expectation(nu);
  REQUIRE(mu.dim() == 2);
  const double total = mu.total_mass();
  CHECK(total == doctest::Approx(4.0).epsilon(1e-12));
  // p-marginal
  for (int k = 0; k < 3; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (mu.point(i)[1] == ps[k]) m += mu.weight(i);
    }
    CHECK(m / total == doctest::Approx(ws[k]).epsilon(1e-12));
  }
  // x-marginal histogram on the grid cells
  for (std::size_t c = 0; c < xg.total_cells(); ++c) {
    const double xc = xg.cell_center(c)[0];
    double m = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (std::abs(mu.point(i)[0] - xc) < 1e-12) m += mu.weight(i);
    }
    CHECK(m / xg.cell_volume() == doctest::Approx(rho(std::span<const double>(&xc, 1))).epsilon(1e-12));
  }
  for (std::size_t j = 0; j < nu.size(); ++j) CHECK(nu.members[j].is_probability());
}

TEST_CASE("kernel density of a uniform sample is close to one inside the square") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ParticleMeasure mu(2);
  for (int i = 0; i < 100000; ++i) {
    const double z[2] = {u(rng), u(rng)};
    mu.add(z, 1e-5);
  }
  const GridSpec grid(Box({0.0, 0.0}, {1.0, 1.0}), {20, 20});
  const auto rho = density_estimate(mu, grid, 0.05);
  for (std::size_t c = 0; c < grid.total_cells(); ++c) {
    const auto z = grid.cell_center(c);
    if (z[0] < 0.2 || z[0] > 0.8 || z[1] < 0.2 || z[1] > 0.8) continue;
    CHECK(std::abs(rho.values[c] - 1.0) < 0.1);
  }
}

TEST_CASE("check_regular accepts a bounded Dirac ensemble") {
  const GridSpec grid(Box({-3.0, -3.0}, {3.0, 3.0}), {60, 60});
  const auto nu = dirac_ensemble(gauss2, grid);
  const auto rep = check_regular(nu, 1.0, grid, 0.1, 0.1);
  CHECK(rep.pass);
  CHECK(rep.bound.max_density <= 1.1);
  const auto bad = check_regular(nu, 0.5, grid, 0.1, 0.1);
  CHECK_FALSE(bad.pass);
}

TEST_CASE("weak distance of shrinking Dirac translates decreases") {
  const auto dict = default_dictionary(Box({-1.0}, {1.0}), 4);
  const double zero = 0.0;
  const auto nu = ParticleMeasure::dirac(std::span<const double>(&zero, 1));
  double prev = kInf;
  for (int n : {1, 2, 4, 8, 16}) {
    const double x = 1.0 / n;
    const double d = weak_distance(ParticleMeasure::dirac(std::span<const double>(&x, 1)), nu, dict);
    CHECK(d < prev);
    CHECK(d > 0.0);
    prev = d;
  }
  CHECK(weak_distance(nu, nu, dict) == 0.0);
}

TEST_CASE("default dictionary ordering and bump integrals") {
  const auto dict = default_dictionary(Box::cube(2, -1.0, 1.0), 3);
  CHECK(dict.size() == 1 + 4 + 16);
  CHECK(dict.functions.front().support.hi[0] == doctest::Approx(2.0));
  const auto phi = bump_function({0.0, 0.0}, {0.5, 2.0});
  CHECK(phi.integral == doctest::Approx(unit_bump_integral() * unit_bump_integral() * 1.0).epsilon(1e-12));
  // gradient against central differences
  const double z[2] = {0.1, -0.7};
  double g[2];
  phi.gradient(z, g);
  const double h = 1e-6;
  for (int a = 0; a < 2; ++a) {
    double zp[2] = {z[0], z[1]}, zm[2] = {z[0], z[1]};
    zp[a] += h;
    zm[a] -= h;
    CHECK(g[a] == doctest::Approx((phi(zp) - phi(zm)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("measure errors") {
  ParticleMeasure a(2);
  const double z[2] = {0.0, 0.0};
  a.add(z, 1.0);
  const double x = 0.0;
  CHECK_THROWS_AS(a.add(std::span<const double>(&x, 1), 1.0), DimensionError);
  CHECK_THROWS_AS(a.add(z, -1.0), ParameterError);
  const auto b = ParticleMeasure::dirac(std::span<const double>(&x, 1));
  CHECK_THROWS_AS(weak_distance(a, b, default_dictionary(Box::cube(2, -1, 1), 2)), DimensionError);
}

TEST_CASE("particle measure JSON round trip") {
  ParticleMeasure mu(2);
  const double z1[2] = {0.1, 1.0 / 3.0}, z2[2] = {-2.5, 1e-300};
  mu.add(z1, 0.25);
  mu.add(z2, 0.75);
  CHECK(particle_measure_from_json(to_json(mu)) == mu);
  MeasureEnsemble nu;
  nu.add(0.5, mu);
  nu.add(0.5, mu.scaled(2.0));
  const auto back = ensemble_from_json(to_json(nu));
  CHECK(back.weights == nu.weights);
  CHECK(back.members == nu.members);
}
