#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "rlf/fields.hpp"
#include "rlf/flow.hpp"
#include "rlf/flow_io.hpp"
#include "rlf/measures.hpp"

using namespace rlf;
using namespace rlf::flow;

namespace {

std::shared_ptr<const fields::PhaseSpaceField> field(const std::string& spec, std::size_t n = 1) {
  return std::make_shared<const fields::PhaseSpaceField>(fields::make_field(spec, n));
}

measures::ParticleMeasure lattice(double lo, double hi, std::size_t m) {
  measures::ParticleMeasure mu(2);
  const double h = (hi - lo) / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double z[2] = {lo + (i + 0.5) * h, lo + (j + 0.5) * h};
      mu.add(z, 1.0 / static_cast<double>(m * m));
    }
  }
  return mu;
}

}  // namespace

TEST_CASE("harmonic orbit closes after one period") {
  const auto b = fields::make_field("harmonic(omega=1)");
  StepControl c;
  c.dt = 1e-3;
  const double z0[2] = {1.0, 0.0};
  const auto tr = integrate_trajectory(b, z0, 2 * std::numbers::pi, c);
  const auto zT = tr.state(tr.size() - 1);
  CHECK(std::abs(zT[0] - 1.0) <= 1e-8);
  CHECK(std::abs(zT[1]) <= 1e-8);
  CHECK(tr.status == Status::complete);
  // (cos t, -sin t) at interior times through dense output
  for (double t : {0.3, 1.7, 4.0}) {
    const auto z = tr.at(t);
    CHECK(std::abs(z[0] - std::cos(t)) <= 1e-9);
    CHECK(std::abs(z[1] + std::sin(t)) <= 1e-9);
  }
}

TEST_CASE("Coulomb trajectory turns before the singularity") {
  const auto b = fields::make_field("coulomb(k=1)");
  StepControl c;
  c.dt = 1e-3;
  const double z0[2] = {1.0, -0.5};
  const double E = b.energy(z0);
  const auto tr = integrate_trajectory(b, z0, 3.0, c);
  CHECK(tr.status == Status::complete);
  double xmin = kInf, drift = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) {
    xmin = std::min(xmin, tr.state(k)[0]);
    drift = std::max(drift, std::abs(b.energy(tr.state(k)) - E));
  }
  CHECK(xmin > 0.0);
  CHECK(tr.min_singular_dist > 0.0);
  CHECK(xmin == doctest::Approx(1.0 / E).epsilon(1e-6));
  CHECK(drift <= 1e-6 * E);
  CHECK(tr.state(tr.size() - 1)[1] > 0.0);
}

TEST_CASE("free flow is reproduced exactly") {
  const auto b = fields::make_field("free");
  StepControl c;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    const double z0[2] = {u(rng), u(rng)};
    const auto tr = integrate_trajectory(b, z0, 1.0, c);
    const auto z = tr.state(tr.size() - 1);
    CHECK(std::abs(z[0] - (z0[0] + z0[1])) <= 1e-12);
    CHECK(z[1] == z0[1]);
  }
}

TEST_CASE("ode residual is small and fourth order") {
  const auto b = fields::make_field("harmonic(omega=1)");
  const double z0[2] = {1.0, 0.5};
  StepControl c;
  c.dt = 1e-3;
  CHECK(ode_residual(integrate_trajectory(b, z0, 1.0, c), b) <= 1e-7);
  // Coarse steps keep the residual above rounding so the ratio is measurable.
  std::vector<double> r;
  for (double dt : {0.1, 0.05, 0.025, 0.0125}) {
    c.dt = dt;
    r.push_back(ode_residual(integrate_trajectory(b, z0, 1.0, c), b));
  }
  for (std::size_t k = 1; k < r.size(); ++k) CHECK(r[k - 1] / r[k] >= 8.0);
}

TEST_CASE("singular guard and events") {
  const auto b = fields::make_field("coulomb(k=1)");
  StepControl c;
  const double on[2] = {0.0, 1.0};
  CHECK_THROWS_AS(integrate_trajectory(b, on, 1.0, c), SingularError);
  c.escape_radius = 2.0;
  const double z0[2] = {1.5, 2.0};
  const auto tr = integrate_trajectory(b, z0, 5.0, c);
  CHECK(tr.status == Status::escaped);
  CHECK(tr.event_time < 5.0);
  const auto f = fields::make_field("free");
  CHECK_THROWS_AS(integrate_trajectory(f, z0, -1.0, StepControl{}), ParameterError);
}

TEST_CASE("Coulomb flow map of data vanishing near S has no invalid mass") {
  auto b = field("coulomb(k=1)");
  measures::ParticleMeasure mu(2);
  for (int i = 0; i < 200; ++i) {
    const double x = 0.5 + 2.5 * i / 199.0;
    const double z[2] = {(i % 2 ? 1.0 : -1.0) * x, -0.8 * (i % 2 ? 1.0 : -1.0)};
    mu.add(z, 1.0 / 200);
  }
  StepControl c;
  c.dt = 1e-3;
  c.samples = 33;
  const auto F = flow_map(b, mu, 2.0, c);
  CHECK(F.invalid_fraction() == 0.0);
  CHECK(F.samples() == 33);
  for (std::size_t i = 0; i < F.size(); ++i) CHECK(F.min_singular_dist[i] > 1e-4);
}

TEST_CASE("superposition matches the exact free pushforward") {
  auto b = field("free");
  const auto mu = lattice(-1.0, 1.0, 12);
  StepControl c;
  c.samples = 11;
  const auto F = flow_map(b, mu, 1.0, c);
  const auto curve = superpose(F, mu);
  const auto phi = measures::bump_function({0.2, 0.1}, {1.5, 1.2});
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    const double t = curve.times[k];
    const auto exact = measures::pushforward(mu, [t](std::span<const double> z) { return Vec{z[0] + t * z[1], z[1]}; });
    CHECK(std::abs(measures::integrate_test(curve.slices[k], phi) - measures::integrate_test(exact, phi)) <= 1e-12);
  }
}

TEST_CASE("expectation of flowed members equals the flowed expectation") {
  auto b = field("harmonic(omega=1.3) + cosine(a=0.2)");
  measures::MeasureEnsemble nu;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int j = 0; j < 4; ++j) {
    measures::ParticleMeasure m(2);
    for (int i = 0; i < 10; ++i) {
      const double z[2] = {u(rng), u(rng)};
      m.add(z, 0.1);
    }
    nu.add(0.25, m);
  }
  StepControl c;
  c.samples = 6;
  const auto E = measure_flow(b, nu, 1.0, c);
  const auto Fe = flow_map(b, measures::expectation(nu), 1.0, c);
  const auto phi = measures::bump_function({0.0, 0.0}, {2.0, 2.0});
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(std::abs(measures::integrate_test(E.expectation_slice(k), phi) -
                   measures::integrate_test(Fe.slice(k), phi)) <= 1e-12);
  }
}

TEST_CASE("harmonic flow of a uniform cloud passes the RLF check") {
  auto b = field("harmonic(omega=1)");
  const auto mu = lattice(-1.0, 1.0, 60);
  StepControl c;
  c.dt = 1e-2;
  c.samples = 129;
  const auto F = flow_map(b, mu, 1.0, c);
  const measures::GridSpec grid(Box::cube(2, -1.6, 1.6), {64, 64});
  const double bw = measures::default_bandwidth(mu);
  const double C = measures::density_estimate(mu, grid, bw).max_value();
  const auto rep = check_rlf(F, C, grid, bw);
  CHECK(rep.pass);
  CHECK(rep.residual_pass);
  CHECK(rep.slices.size() == 5);
  // Same trajectories shrunk towards the origin by 1 - t/2: density grows 4x by t = 1.
  auto G = F;
  for (std::size_t i = 0; i < G.size(); ++i) {
    for (std::size_t k = 0; k < G.samples(); ++k) {
      for (std::size_t a = 0; a < 2; ++a) G.states[(i * G.samples() + k) * 2 + a] *= 1.0 - 0.5 * G.times[k];
    }
  }
  CHECK_FALSE(check_rlf(G, C, grid, bw).pass);
}

TEST_CASE("flow maps are deterministic and round trip through files") {
  auto b = field("harmonic(omega=1)");
  const auto mu = lattice(-1.0, 1.0, 8);
  StepControl c;
  c.samples = 9;
  const auto F1 = flow_map(b, mu, 1.0, c);
  const auto F2 = flow_map(b, mu, 1.0, c);
  CHECK(F1.states == F2.states);
  const auto dir = std::filesystem::temp_directory_path() / "rlf_flow_bundle_test";
  std::filesystem::remove_all(dir);
  write_flow_bundle(F1, dir.string());
  const auto back = read_flow_bundle(dir.string());
  CHECK(back.times == F1.times);
  CHECK(back.states == F1.states);
  std::filesystem::remove_all(dir);
}
