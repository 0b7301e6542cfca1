#include "rlf/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rlf/fft.hpp"

namespace rlf::quantum {

using std::numbers::pi;

double PhaseSpaceDensity::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.cell_area();
}

double PhaseSpaceDensity::min_value() const {
  return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
}

double PhaseSpaceDensity::max_value() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

std::vector<double> PhaseSpaceDensity::x_marginal() const {
  std::vector<double> m(grid.nx, 0.0);
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t k = 0; k < grid.np; ++k) m[i] += at(i, k);
    m[i] *= grid.dp;
  }
  return m;
}

std::vector<double> PhaseSpaceDensity::p_marginal() const {
  std::vector<double> m(grid.np, 0.0);
  for (std::size_t i = 0; i < grid.nx; ++i) {
    for (std::size_t k = 0; k < grid.np; ++k) m[k] += at(i, k);
  }
  for (double& v : m) v *= grid.dx;
  return m;
}

std::pair<std::size_t, std::size_t> active_window(const WaveFunction& psi, double tail) {
  double mx = 0.0;
  for (const auto& v : psi.values) mx = std::max(mx, std::norm(v));
  if (!(mx > 0.0)) throw NumericalError("active_window: wave function vanishes");
  std::size_t lo = psi.values.size(), hi = 0;
  for (std::size_t j = 0; j < psi.values.size(); ++j) {
    if (std::norm(psi.values[j]) >= tail * mx) {
      lo = std::min(lo, j);
      hi = j + 1;
    }
  }
  return {lo, hi};
}

namespace {

// Products psi(x + a) conj psi(x - a) across a window cut at |psi|^2 = tail
// lose terms of size sqrt(tail), so the Wigner window is cut far lower.
constexpr double kWignerTail = 1e-24;

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m *= 2;
  return m;
}

// Fraction of |hat psi|^2 at |p| >= pi eps / (2 dx), the Wigner momentum limit.
double alias_fraction(const WaveFunction& psi) {
  const std::size_t N = psi.values.size();
  Fft fft(N);
  std::vector<cplx> buf = psi.values;
  fft.forward(buf.data());
  double total = 0.0, high = 0.0;
  const double kmax = pi / (2.0 * psi.grid.dx());
  for (std::size_t j = 0; j < N; ++j) {
    const double w = std::norm(buf[j]);
    total += w;
    if (std::abs(psi.grid.wavenumber(j)) >= kmax) high += w;
  }
  return total > 0.0 ? high / total : 0.0;
}

void check_alias(const WaveFunction& psi, double alias_tol) {
  const double f = alias_fraction(psi);
  if (f > alias_tol) {
    throw NumericalError("wigner: momentum content beyond the phase-space grid (fraction " + format_double(f) +
                         "); refine the spatial grid");
  }
}

// Correlation row c_m = psi_{j+m} conj psi_{j-m} within [lo, hi), transformed.
struct WignerRows {
  const WaveFunction& psi;
  std::size_t lo, hi, M;
  Fft fft;
  std::vector<cplx> buf;

  WignerRows(const WaveFunction& p, std::size_t lo_, std::size_t hi_, std::size_t M_)
      : psi(p), lo(lo_), hi(hi_), M(M_), fft(M_), buf(M_) {}

  // Fills buf with sum_m c_m exp(-2 pi i k m / M).
  void row(std::size_t j) {
    std::fill(buf.begin(), buf.end(), cplx(0.0));
    const std::size_t reach = std::min(j - lo, hi - 1 - j);
    for (std::size_t m = 0; m <= reach; ++m) {
      const cplx c = psi.values[j + m] * std::conj(psi.values[j - m]);
      buf[m] += c;
      if (m > 0) buf[M - m] += std::conj(c);
    }
    fft.forward(buf.data());
  }
};

}  // namespace

PhaseSpaceDensity wigner(const WaveFunction& psi, double alias_tol) {
  check_alias(psi, alias_tol);
  const auto [lo, hi] = active_window(psi, kWignerTail);
  const std::size_t M = next_pow2(hi - lo + 2);
  const double dx = psi.grid.dx(), eps = psi.eps;
  PhaseSpaceDensity W;
  W.eps = eps;
  W.grid = {psi.grid.x(lo), dx, hi - lo, -pi * eps / (2.0 * dx), pi * eps / (static_cast<double>(M) * dx), M};
  W.values.assign(W.grid.nx * M, 0.0);
  WignerRows rows(psi, lo, hi, M);
  const double scale = dx / (pi * eps);
  for (std::size_t j = lo; j < hi; ++j) {
    rows.row(j);
    for (std::size_t c = 0; c < M; ++c) {
      const std::size_t bin = (c + M / 2) % M;  // column c <-> k = c - M/2
      W.values[(j - lo) * M + c] = scale * rows.buf[bin].real();
    }
  }
  return W;
}

std::vector<double> momentum_density(const WaveFunction& psi, std::size_t M, std::vector<double>* p_grid) {
  const auto [lo, hi] = active_window(psi, kWignerTail);
  if (2 * M < hi - lo) throw ParameterError("momentum_density: correlation length too short for the window");
  const double dx = psi.grid.dx(), eps = psi.eps;
  Fft fft(2 * M);
  std::vector<cplx> buf(2 * M, cplx(0.0));
  for (std::size_t j = lo; j < hi; ++j) buf[j - lo] = psi.values[j];
  fft.forward(buf.data());
  std::vector<double> out(M);
  if (p_grid) p_grid->resize(M);
  const double scale = dx * dx / (2.0 * pi * eps);
  for (std::size_t c = 0; c < M; ++c) {
    const long long k = static_cast<long long>(c) - static_cast<long long>(M / 2);
    const std::size_t bin = static_cast<std::size_t>((k + static_cast<long long>(2 * M)) % static_cast<long long>(2 * M));
    out[c] = scale * std::norm(buf[bin]);
    if (p_grid) (*p_grid)[c] = pi * eps * static_cast<double>(k) / (static_cast<double>(M) * dx);
  }
  return out;
}

WignerCheck wigner_marginals(const WaveFunction& psi, double alias_tol) {
  check_alias(psi, alias_tol);
  const auto [lo, hi] = active_window(psi, kWignerTail);
  const std::size_t M = next_pow2(hi - lo + 2);
  const double dx = psi.grid.dx(), eps = psi.eps;
  const double dp = pi * eps / (static_cast<double>(M) * dx);
  const double scale = dx / (pi * eps);
  WignerRows rows(psi, lo, hi, M);
  std::vector<double> pm(M, 0.0);
  WignerCheck chk;
  chk.min_value = kInf;
  for (std::size_t j = 0; j < psi.values.size(); ++j) {
    const double rho = std::norm(psi.values[j]);
    if (j < lo || j >= hi) {
      chk.x_error = std::max(chk.x_error, rho);
      continue;
    }
    rows.row(j);
    double xm = 0.0;
    for (std::size_t c = 0; c < M; ++c) {
      const std::size_t bin = (c + M / 2) % M;
      const double w = scale * rows.buf[bin].real();
      chk.imag_part = std::max(chk.imag_part, scale * std::abs(rows.buf[bin].imag()));
      chk.min_value = std::min(chk.min_value, w);
      xm += w;
      pm[c] += w;
    }
    chk.x_error = std::max(chk.x_error, std::abs(xm * dp - rho));
  }
  const auto ref = momentum_density(psi, M, nullptr);
  for (std::size_t c = 0; c < M; ++c) chk.p_error = std::max(chk.p_error, std::abs(pm[c] * dx - ref[c]));
  return chk;
}

PhaseSpaceDensity husimi(const WaveFunction& psi, const HusimiOptions& opts, double* min_before_clip) {
  const std::size_t N = psi.values.size();
  const double dx = psi.grid.dx(), eps = psi.eps, se = std::sqrt(eps);
  const auto [lo, hi] = active_window(psi, opts.tail);

  const auto gw = static_cast<std::size_t>(std::ceil(7.0 * se / dx));
  const std::size_t M = next_pow2(4 * (2 * gw + 1));
  const double bin = 2.0 * pi * eps / (static_cast<double>(M) * dx);
  const auto sx = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opts.spacing * se / dx)));
  const auto sp = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opts.spacing * se / bin)));
  const double Dp = static_cast<double>(sp) * bin;
  const double p_lim = std::min(opts.p_max, pi * eps / dx - Dp);
  const auto K = static_cast<long long>(std::floor(p_lim / Dp));

  // Row centres on multiples of sx, covering the window plus Gaussian reach.
  const auto ext = static_cast<long long>(std::ceil(6.0 * se / dx));
  long long first = static_cast<long long>(lo) - ext, last = static_cast<long long>(hi) - 1 + ext;
  first = std::max<long long>(0, first);
  last = std::min<long long>(static_cast<long long>(N) - 1, last);
  first = (first + static_cast<long long>(sx) - 1) / static_cast<long long>(sx) * static_cast<long long>(sx);

  PhaseSpaceDensity H;
  H.eps = eps;
  std::vector<long long> centers;
  for (long long j = first; j <= last; j += static_cast<long long>(sx)) centers.push_back(j);
  H.grid = {centers.empty() ? 0.0 : psi.grid.x(static_cast<std::size_t>(centers.front())),
            static_cast<double>(sx) * dx,
            centers.size(),
            -static_cast<double>(K) * Dp,
            Dp,
            static_cast<std::size_t>(2 * K + 1)};
  H.values.assign(H.grid.nx * H.grid.np, 0.0);

  std::vector<double> g(2 * gw + 1);
  const double gnorm = std::pow(pi * eps, -0.25);
  for (std::size_t a = 0; a < g.size(); ++a) {
    const double y = (static_cast<double>(a) - static_cast<double>(gw)) * dx;
    g[a] = gnorm * std::exp(-y * y / (2.0 * eps));
  }
  const double scale = dx * dx / (2.0 * pi * eps);
  Fft fft(M);
  std::vector<cplx> buf(M);
  double mn = kInf;
  for (std::size_t r = 0; r < centers.size(); ++r) {
    std::fill(buf.begin(), buf.end(), cplx(0.0));
    const long long jc = centers[r];
    for (std::size_t a = 0; a < g.size(); ++a) {
      const long long j = jc - static_cast<long long>(gw) + static_cast<long long>(a);
      if (j < 0 || j >= static_cast<long long>(N)) continue;
      buf[a] = g[a] * psi.values[static_cast<std::size_t>(j)];
    }
    fft.forward(buf.data());
    for (long long k = -K; k <= K; ++k) {
      const long long b = (k * static_cast<long long>(sp)) % static_cast<long long>(M);
      const std::size_t idx = static_cast<std::size_t>(b < 0 ? b + static_cast<long long>(M) : b);
      const double v = scale * std::norm(buf[idx]);
      mn = std::min(mn, v);
      H.values[r * H.grid.np + static_cast<std::size_t>(k + K)] = v;
    }
  }
  if (min_before_clip) *min_before_clip = mn;
  for (double& v : H.values) {
    if (v < 0.0) {
      if (v < -1e-12) throw NumericalError("husimi: negative value below clipping tolerance");
      v = 0.0;
    }
  }
  return H;
}

measures::ParticleMeasure husimi_to_measure(const PhaseSpaceDensity& H, double threshold) {
  const double mx = H.max_value();
  if (!(mx > 0.0)) throw NumericalError("husimi_to_measure: density vanishes");
  if (H.min_value() < 0.0) throw ParameterError("husimi_to_measure: density must be nonnegative");
  const double cut = threshold * mx;
  measures::ParticleMeasure mu(2);
  double kept = 0.0, total = 0.0;
  for (std::size_t i = 0; i < H.grid.nx; ++i) {
    for (std::size_t k = 0; k < H.grid.np; ++k) {
      const double v = H.at(i, k);
      total += v;
      if (v > 0.0 && v >= cut) kept += v;
    }
  }
  const double factor = total / kept;
  for (std::size_t i = 0; i < H.grid.nx; ++i) {
    for (std::size_t k = 0; k < H.grid.np; ++k) {
      const double v = H.at(i, k);
      if (!(v > 0.0 && v >= cut)) continue;
      const double z[2] = {H.grid.x(i), H.grid.p(k)};
      mu.add(z, v * factor * H.grid.cell_area());
    }
  }
  return mu;
}

double dual_distance(const measures::ParticleMeasure& a, const measures::ParticleMeasure& b,
                     const measures::TestFunctionDictionary& dict) {
  return measures::weak_distance(a, b, dict);
}

}  // namespace rlf::quantum
