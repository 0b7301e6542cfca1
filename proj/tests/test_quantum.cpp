#include <cmath>
#include <numbers>
#include <string>

#include "doctest.h"
#include "rlf/fields.hpp"
#include "rlf/flow.hpp"
#include "rlf/quantum.hpp"
#include "rlf/transforms.hpp"

using namespace rlf;
using namespace rlf::quantum;

namespace {

double position_variance(const WaveFunction& psi) {
  double m = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j < psi.grid.N; ++j) {
    const double w = std::norm(psi.values[j]);
    const double x = psi.grid.x(j);
    m += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  m1 /= m;
  return m2 / m - m1 * m1;
}

std::pair<double, double> husimi_centroid(const PhaseSpaceDensity& H) {
  double m = 0.0, mx = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < H.grid.nx; ++i) {
    for (std::size_t k = 0; k < H.grid.np; ++k) {
      m += H.at(i, k);
      mx += H.at(i, k) * H.grid.x(i);
      mp += H.at(i, k) * H.grid.p(k);
    }
  }
  return {mx / m, mp / m};
}

}  // namespace

TEST_CASE("WKB datum has position variance eps^(2 alpha) var(phi0)") {
  const Grid1D g{8.0, 4096};
  const auto env = Envelope::bump(2.0);
  std::vector<double> v;
  for (double eps : {0.4, 0.1}) {
    const auto psi = wkb_initial({0.3, 1.0, 0.5, eps, env}, g);
    v.push_back(position_variance(psi));
    CHECK(v.back() == doctest::Approx(eps * env.variance()).epsilon(1e-3));
  }
  CHECK(std::abs(v[0] / v[1] / 4.0 - 1.0) <= 0.05);
}

TEST_CASE("free Gaussian packet matches the analytic solution") {
  const Grid1D g{8.0, 4096};
  const GaussianPacket gp{0.5, 1.0, 1.0, 0.1, 0.0, 0.0};
  const fields::Potential U = fields::make_potential("free");
  const auto psi = propagate(gp.sample(g, 0.0), U, {0.0, 1.0}, 1e-2).back();
  CHECK(l2_distance(psi, gp.sample(g, 1.0)) <= 1e-6);
  CHECK(std::abs(psi.norm() - 1.0) <= 1e-12);
}

TEST_CASE("Strang splitting is second order on the harmonic oscillator") {
  const Grid1D g{8.0, 4096};
  const GaussianPacket gp{0.5, 1.0, 0.7, 0.1, 1.0, 0.0};
  const auto U = fields::make_potential("harmonic(omega=1)");
  const auto psi0 = gp.sample(g, 0.0);
  const auto exact = gp.sample(g, 1.0);
  std::vector<double> err;
  for (double dt : {0.1, 0.05, 0.025}) {
    err.push_back(l2_distance(evolve(psi0, U, dt, static_cast<std::size_t>(std::llround(1.0 / dt))), exact));
  }
  CHECK(err[0] / err[1] >= 3.5);
  CHECK(err[1] / err[2] >= 3.5);
}

TEST_CASE("backward propagation inverts forward propagation") {
  const Grid1D g{8.0, 2048};
  const auto U = fields::make_potential("harmonic(omega=1.5) + cosine(a=0.3)");
  const auto psi0 = wkb_initial({0.2, -0.5, 0.5, 0.2, Envelope::gaussian(1.0)}, g);
  const auto fwd = propagate(psi0, U, {0.0, 0.5}, 1e-2).back();
  const auto back = evolve(fwd, U, -1e-2, 50);
  CHECK(l2_distance(back, psi0) <= 1e-10);
  const auto bw = propagate_backward(psi0, U, {0.0, 0.5}, 1e-2).back();
  CHECK(l2_distance(bw, evolve(psi0, U, -1e-2, 50)) <= 1e-10);
}

TEST_CASE("coherent state centroid follows the classical trajectory") {
  const double eps = 0.05;
  const Grid1D g{8.0, 4096};
  const auto U = fields::make_potential("harmonic(omega=1)");
  const GaussianPacket gp{1.0, 0.5, 1.0, eps, 1.0, 0.0};
  const auto psi = propagate(gp.sample(g, 0.0), U, {0.0, 1.0}, 1e-3).back();
  const auto H = husimi(psi);
  const auto [x, p] = husimi_centroid(H);
  const auto b = fields::make_field("harmonic(omega=1)");
  flow::StepControl c;
  const double z0[2] = {1.0, 0.5};
  const auto tr = flow::integrate_trajectory(b, z0, 1.0, c);
  const auto z = tr.state(tr.size() - 1);
  CHECK(std::abs(x - z[0]) <= 0.02);
  CHECK(std::abs(p - z[1]) <= 0.02);
}

TEST_CASE("Wigner transform of a Gaussian is the closed-form Gaussian") {
  const double eps = 0.1;
  const Grid1D g{8.0, 2048};
  const GaussianPacket gp{0.4, -0.8, 1.0, eps, 0.0, 0.0};
  const auto W = wigner(gp.sample(g, 0.0));
  CHECK(W.min_value() >= -1e-10);
  double err = 0.0;
  for (std::size_t i = 0; i < W.grid.nx; i += 7) {
    for (std::size_t k = 0; k < W.grid.np; k += 5) {
      const double dx = W.grid.x(i) - 0.4, dp = W.grid.p(k) + 0.8;
      const double ref = std::exp(-(dx * dx + dp * dp) / eps) / (std::numbers::pi * eps);
      err = std::max(err, std::abs(W.at(i, k) - ref));
    }
  }
  CHECK(err <= 1e-8);
  CHECK(W.integral() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("Wigner marginals reproduce |psi|^2 and |hat psi|^2") {
  const Grid1D g{8.0, 4096};
  const auto psi = wkb_initial({0.3, 1.0, 0.5, 0.1, Envelope::bump(2.0)}, g);
  const auto c = wigner_marginals(psi);
  CHECK(c.x_error <= 1e-8);
  CHECK(c.p_error <= 1e-6);
  CHECK(c.imag_part <= 1e-12);
  // The row-by-row check agrees with the full transform.
  const auto W = wigner(psi);
  const auto xm = W.x_marginal();
  const auto [lo, hi] = active_window(psi, 1e-24);
  double e = 0.0;
  for (std::size_t j = lo; j < hi; ++j) e = std::max(e, std::abs(xm[j - lo] - std::norm(psi.values[j])));
  CHECK(e <= 1e-8);
}

TEST_CASE("Wigner refuses momentum content beyond its grid") {
  const Grid1D g{8.0, 512};
  const GaussianPacket gp{0.0, 6.0, 1.0, 0.1, 0.0, 0.0};
  CHECK_THROWS_AS(wigner(gp.sample(g, 0.0)), NumericalError);
}

TEST_CASE("Husimi of a coherent state peaks at its centre") {
  const double eps = 0.1;
  const Grid1D g{8.0, 4096};
  const GaussianPacket gp{0.7, -1.2, 1.0, eps, 0.0, 0.0};
  double mn = 0.0;
  const auto H = husimi(gp.sample(g, 0.0), {}, &mn);
  std::size_t bi = 0, bk = 0;
  for (std::size_t i = 0; i < H.grid.nx; ++i) {
    for (std::size_t k = 0; k < H.grid.np; ++k) {
      if (H.at(i, k) > H.at(bi, bk)) bi = i, bk = k;
    }
  }
  CHECK(std::abs(H.grid.x(bi) - 0.7) <= H.grid.dx);
  CHECK(std::abs(H.grid.p(bk) + 1.2) <= H.grid.dp);
  CHECK(mn >= -1e-12);
  CHECK(std::abs(H.integral() - 1.0) <= 1e-6);
  // Closed form: exp(-((x-q)^2 + (p-p0)^2)/(2 eps)) / (2 pi eps)
  CHECK(H.at(bi, bk) == doctest::Approx(std::exp(-(std::pow(H.grid.x(bi) - 0.7, 2) + std::pow(H.grid.p(bk) + 1.2, 2)) /
                                                 (2 * eps)) /
                                        (2 * std::numbers::pi * eps))
                            .epsilon(1e-8));
}

TEST_CASE("Husimi measures are robust to the particle threshold") {
  const Grid1D g{8.0, 4096};
  const auto psi = wkb_initial({0.3, 1.0, 0.5, 0.1, Envelope::bump(2.0)}, g);
  const auto H = husimi(psi);
  const auto a = husimi_to_measure(H, 0.0);
  const auto b = husimi_to_measure(H, 1e-6);
  CHECK(b.size() < a.size());
  const auto dict = measures::default_dictionary(Box::cube(2, -4.0, 4.0), 4);
  CHECK(dual_distance(a, b, dict) <= 1e-3);
  CHECK(a.total_mass() == doctest::Approx(H.integral()).epsilon(1e-12));
}

TEST_CASE("WKB datum checks resolution and box size") {
  const Grid1D coarse{8.0, 256};
  try {
    wkb_initial({0.0, 2.0, 0.5, 0.05, Envelope::bump(2.0)}, coarse);
    FAIL("expected ParameterError");
  } catch (const ParameterError& e) {
    CHECK(std::string(e.what()).find("N") != std::string::npos);
  }
  const Grid1D small{1.0, 4096};
  CHECK_THROWS_AS(wkb_initial({0.0, 0.0, 0.5, 0.4, Envelope::bump(2.0)}, small), ParameterError);
}

TEST_CASE("Coulomb potential is clamped at two grid spacings") {
  const Grid1D g{4.0, 1024};
  const auto U = fields::make_potential("coulomb(k=1)");
  const auto v = potential_on_grid(U, g);
  const double rc = clamp_radius(g);
  CHECK(rc == doctest::Approx(2 * g.dx()));
  for (std::size_t j = 0; j < g.N; ++j) CHECK(v[j] <= 1.0 / rc * (1 + 1e-12));
  CHECK(v[g.N / 2 + 100] == doctest::Approx(1.0 / std::abs(g.x(g.N / 2 + 100))));
}

TEST_CASE("split steps are unitary") {
  const Grid1D g{8.0, 2048};
  const auto U = fields::make_potential("coulomb(k=1) + harmonic(omega=0.5)");
  const auto psi = evolve(wkb_initial({1.5, 0.5, 0.5, 0.1, Envelope::bump(2.0)}, g), U, 1e-3, 1000);
  CHECK(std::abs(psi.norm() - 1.0) <= 1e-9);
}

TEST_CASE("Husimi centroid error of coherent states shrinks with eps") {
  const Grid1D g{8.0, 4096};
  const auto U = fields::make_potential("harmonic(omega=1.3) + cosine(a=0.2)");
  const auto b = fields::make_field("harmonic(omega=1.3) + cosine(a=0.2)");
  flow::StepControl c;
  const double z0[2] = {1.0, 0.5};
  const auto tr = flow::integrate_trajectory(b, z0, 1.0, c);
  const auto z = tr.state(tr.size() - 1);
  std::vector<double> err;
  for (double eps : {0.1, 0.05}) {
    const GaussianPacket gp{1.0, 0.5, 1.0, eps, 0.0, 0.0};
    const auto H = husimi(propagate(gp.sample(g, 0.0), U, {0.0, 1.0}, 1e-3).back());
    const auto [x, p] = husimi_centroid(H);
    err.push_back(std::hypot(x - z[0], p - z[1]));
  }
  CHECK(err[1] < 2.0 * err[0] + 1e-3);
  CHECK(err[1] < 0.05);
}
