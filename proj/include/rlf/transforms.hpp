#pragma once

// Phase-space representations of a 1D wave function at scale eps:
//   Wigner  W(x, p) = (2 pi)^{-1} int psi(x + eps y/2) conj psi(x - eps y/2) e^{-i p y} dy
//   Husimi  H = W * G with G the Gaussian of variances (eps/2, eps/2),
//           computed as |<g_{x,p}, psi>|^2 / (2 pi eps) with coherent states
//           g_{x,p}(y) = (pi eps)^{-1/4} exp(-(y - x)^2/(2 eps) + i p y/eps).

#include <cstddef>
#include <vector>

#include "rlf/measures.hpp"
#include "rlf/quantum.hpp"

namespace rlf::quantum {

/// Regular phase grid: x_i = x_start + i dx, p_k = p_start + k dp.
struct PhaseGrid {
  double x_start = 0.0;
  double dx = 1.0;
  std::size_t nx = 0;
  double p_start = 0.0;
  double dp = 1.0;
  std::size_t np = 0;

  double x(std::size_t i) const { return x_start + static_cast<double>(i) * dx; }
  double p(std::size_t k) const { return p_start + static_cast<double>(k) * dp; }
  double cell_area() const { return dx * dp; }
};

struct PhaseSpaceDensity {
  PhaseGrid grid;
  std::vector<double> values;  // row-major, x slow
  double eps = 1.0;

  double at(std::size_t i, std::size_t k) const { return values[i * grid.np + k]; }
  double integral() const;
  double min_value() const;
  double max_value() const;
  std::vector<double> x_marginal() const;
  std::vector<double> p_marginal() const;
};

/// Rows of psi with |psi|^2 >= tail * max|psi|^2, as a half-open index range.
std::pair<std::size_t, std::size_t> active_window(const WaveFunction& psi, double tail = 1e-14);

/// Wigner transform on the active window of psi (|psi|^2 >= 1e-24 max). The p grid has spacing
/// pi eps / (M dx) over [-pi eps/(2 dx), pi eps/(2 dx)), M the correlation
/// length (power of two covering the window). Throws NumericalError if
/// psi carries more than `alias_tol` of its mass above that momentum range.
PhaseSpaceDensity wigner(const WaveFunction& psi, double alias_tol = 1e-7);

struct WignerCheck {
  double x_error = 0.0;     // max_j |sum_p W dp - |psi_j|^2|
  double p_error = 0.0;     // max_k |sum_x W dx - |hat psi(p_k)|^2|
  double min_value = 0.0;   // smallest Wigner value
  double imag_part = 0.0;   // largest |Im| of the row transforms
};

/// Marginal identities of the Wigner transform computed row by row in O(N)
/// memory. |hat psi|^2 uses the unitary transform in p = eps k.
WignerCheck wigner_marginals(const WaveFunction& psi, double alias_tol = 1e-7);

/// |hat psi(p)|^2 on the Wigner momentum grid of psi.
std::vector<double> momentum_density(const WaveFunction& psi, std::size_t M, std::vector<double>* p_grid);

struct HusimiOptions {
  double spacing = 0.25;  // phase cell side in units of sqrt(eps)
  double p_max = 20.0;    // momentum window [-p_max, p_max]
  double tail = 1e-14;    // active-window threshold on |psi|^2
};

/// Husimi density on a phase grid; `min_before_clip` receives the smallest
/// value before clipping at 0 (negative values within -1e-12 are clipped).
PhaseSpaceDensity husimi(const WaveFunction& psi, const HusimiOptions& opts = {},
                         double* min_before_clip = nullptr);

/// One particle per cell with density >= threshold * max, weights
/// proportional to density * cell area, renormalized to the total mass of H.
measures::ParticleMeasure husimi_to_measure(const PhaseSpaceDensity& H, double threshold);

/// Dictionary dual metric on phase space used as the weak* distance surrogate.
double dual_distance(const measures::ParticleMeasure& a, const measures::ParticleMeasure& b,
                     const measures::TestFunctionDictionary& dict);

}  // namespace rlf::quantum
