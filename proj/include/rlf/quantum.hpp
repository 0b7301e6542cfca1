#pragma once

// Semiclassical Schroedinger equation  i eps psi_t = -eps^2/2 psi_xx + U psi
// in one space dimension on a periodic grid [-L, L), WKB-type initial data,
// split-step Fourier propagation, and a closed-form Gaussian packet used as
// an oracle for free and harmonic potentials.

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "rlf/common.hpp"
#include "rlf/fields.hpp"

namespace rlf::quantum {

using cplx = std::complex<double>;

struct Grid1D {
  double L = 8.0;
  std::size_t N = 4096;

  double dx() const { return 2.0 * L / static_cast<double>(N); }
  double x(std::size_t j) const { return -L + static_cast<double>(j) * dx(); }
  /// Angular wavenumber of FFT bin j (wrapped to [-N/2, N/2)).
  double wavenumber(std::size_t j) const;
};

struct WaveFunction {
  Grid1D grid;
  std::vector<cplx> values;
  double eps = 1.0;

  /// sum |psi_j|^2 dx (trapezoid on the periodic grid).
  double norm_squared() const;
  double norm() const;
  /// max |psi| over the outermost `layers` nodes on each side.
  double boundary_amplitude(std::size_t layers = 2) const;
};

WaveFunction conjugate(const WaveFunction& psi);
/// L2 distance on the common grid.
double l2_distance(const WaveFunction& a, const WaveFunction& b);

// ----------------------------------------------------------------------------
// Envelope profiles with unit L2 norm.
// ----------------------------------------------------------------------------
struct Envelope {
  enum class Kind { bump, gaussian };

  Kind kind = Kind::bump;
  double width = 2.0;  // bump: support radius; gaussian: standard deviation parameter sigma

  static Envelope bump(double radius);
  static Envelope gaussian(double sigma);

  /// bump:     c exp(1 - 1/(1 - (y/r)^2)) on |y| < r
  /// gaussian: (pi sigma^2)^{-1/4} exp(-y^2 / (2 sigma^2))
  double value(double y) const;
  /// |hat phi0|^2(xi) with hat f(xi) = (2 pi)^{-1/2} int f(y) exp(-i y xi) dy.
  double fourier_density(double xi) const;
  /// int y^2 |phi0|^2 dy.
  double variance() const;
  /// Radius outside which |phi0| is zero (bump) or below 1e-16 (gaussian).
  double support_radius() const;
  std::string describe() const;
};

struct WKBParams {
  double x0 = 0.0;
  double p0 = 0.0;
  double alpha = 0.5;
  double eps = 0.1;
  Envelope phi0;
};

/// eps^{-alpha/2} phi0((x - x0)/eps^alpha) exp(i x p0 / eps), renormalized to
/// unit L2 norm; `correction` receives |1 - norm before renormalization|.
/// Throws ParameterError when the grid is too coarse (dx > eps/(4|p0|+4)) or
/// the envelope does not fit in the box, stating the N or L required.
WaveFunction wkb_initial(const WKBParams& params, const Grid1D& grid, double* correction = nullptr);

// ----------------------------------------------------------------------------
// Propagation
// ----------------------------------------------------------------------------
/// Coulomb clamp radius used on the grid: two grid spacings.
double clamp_radius(const Grid1D& grid);

/// U on the grid nodes, Coulomb part clamped at clamp_radius(grid).
std::vector<double> potential_on_grid(const fields::Potential& U, const Grid1D& grid);

/// Strang splitting: half potential phase exp(-i U dt/(2 eps)), kinetic
/// multiplier exp(-i eps k^2 dt / 2), half potential phase. Negative dt runs
/// backward in time.
WaveFunction evolve(const WaveFunction& psi, const fields::Potential& U, double dt, std::size_t steps);

/// States at the given times (increasing, starting at 0); every interval is
/// split into equal steps no longer than dt_max.
std::vector<WaveFunction> propagate(const WaveFunction& psi0, const fields::Potential& U,
                                    const std::vector<double>& times, double dt_max);

/// psi(-t) for t in `times`: conj(propagate(conj psi0)), valid for real U.
std::vector<WaveFunction> propagate_backward(const WaveFunction& psi0, const fields::Potential& U,
                                             const std::vector<double>& times, double dt_max);

// ----------------------------------------------------------------------------
// Closed-form Gaussian packet for U = omega^2 x^2/2 + v0 (omega = 0 is free):
//   psi = (pi eps)^{-1/4} A^{-1/2} exp{(i/eps)[B/(2A) (x-q)^2 + p (x-q) + S]},
//   A' = B, B' = -omega^2 A, A(0) = sigma, B(0) = i/sigma, (q, p) classical,
//   S' = p^2/2 - U(q).
// ----------------------------------------------------------------------------
struct GaussianPacket {
  double q0 = 0.0;
  double p0 = 0.0;
  double sigma = 1.0;
  double eps = 0.1;
  double omega = 0.0;
  double v0 = 0.0;

  double q(double t) const;
  double p(double t) const;
  cplx A(double t) const;
  cplx B(double t) const;
  double action(double t) const;
  WaveFunction sample(const Grid1D& grid, double t) const;
};

}  // namespace rlf::quantum
