#include "rlf/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rlf/fft.hpp"

namespace rlf::quantum {

using std::numbers::pi;

double Grid1D::wavenumber(std::size_t j) const {
  const auto n = static_cast<long long>(N);
  long long m = static_cast<long long>(j);
  if (m >= n / 2) m -= n;
  return 2.0 * pi * static_cast<double>(m) / (static_cast<double>(N) * dx());
}

double WaveFunction::norm_squared() const {
  double s = 0.0;
  for (const auto& v : values) s += std::norm(v);
  return s * grid.dx();
}

double WaveFunction::norm() const { return std::sqrt(norm_squared()); }

double WaveFunction::boundary_amplitude(std::size_t layers) const {
  double m = 0.0;
  const std::size_t n = values.size();
  for (std::size_t j = 0; j < std::min(layers, n); ++j) {
    m = std::max({m, std::abs(values[j]), std::abs(values[n - 1 - j])});
  }
  return m;
}

WaveFunction conjugate(const WaveFunction& psi) {
  WaveFunction out = psi;
  for (auto& v : out.values) v = std::conj(v);
  return out;
}

double l2_distance(const WaveFunction& a, const WaveFunction& b) {
  if (a.values.size() != b.values.size() || a.grid.L != b.grid.L) {
    throw DimensionError("l2_distance: wave functions live on different grids");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < a.values.size(); ++j) s += std::norm(a.values[j] - b.values[j]);
  return std::sqrt(s * a.grid.dx());
}

// ============================================================================
// Envelopes
// ============================================================================

namespace {

double unit_bump(double s) {
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

// Trapezoid on [-1, 1]; all derivatives of the integrands vanish at the ends.
template <typename F>
double flat_integral(F&& f, std::size_t panels) {
  const double h = 2.0 / static_cast<double>(panels);
  double s = 0.0;
  for (std::size_t i = 1; i < panels; ++i) s += f(-1.0 + h * static_cast<double>(i));
  return s * h;
}

double bump_square_integral() {
  static const double v = flat_integral([](double s) { return unit_bump(s) * unit_bump(s); }, 20000);
  return v;
}

double bump_second_moment() {
  static const double v = flat_integral([](double s) { return s * s * unit_bump(s) * unit_bump(s); }, 20000);
  return v;
}

}  // namespace

Envelope Envelope::bump(double radius) {
  if (!(radius > 0.0)) throw ParameterError("Envelope: radius must be positive");
  return {Kind::bump, radius};
}

Envelope Envelope::gaussian(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("Envelope: sigma must be positive");
  return {Kind::gaussian, sigma};
}

double Envelope::value(double y) const {
  if (kind == Kind::gaussian) {
    return std::pow(pi * width * width, -0.25) * std::exp(-y * y / (2.0 * width * width));
  }
  return unit_bump(y / width) / std::sqrt(width * bump_square_integral());
}

double Envelope::fourier_density(double xi) const {
  if (kind == Kind::gaussian) {
    return width / std::sqrt(pi) * std::exp(-width * width * xi * xi);
  }
  const double r = width;
  const double c = 1.0 / std::sqrt(r * bump_square_integral());
  const auto panels = static_cast<std::size_t>(4000 + 40.0 * r * std::abs(xi));
  const double I = flat_integral([&](double s) { return unit_bump(s) * std::cos(r * s * xi); }, panels);
  const double hat = c * r * I / std::sqrt(2.0 * pi);
  return hat * hat;
}

double Envelope::variance() const {
  if (kind == Kind::gaussian) return 0.5 * width * width;
  return width * width * bump_second_moment() / bump_square_integral();
}

double Envelope::support_radius() const { return kind == Kind::gaussian ? 9.0 * width : width; }

std::string Envelope::describe() const {
  std::ostringstream os;
  os << (kind == Kind::gaussian ? "gaussian(sigma=" : "bump(r=") << format_double(width) << ')';
  return os.str();
}

WaveFunction wkb_initial(const WKBParams& prm, const Grid1D& grid, double* correction) {
  if (!(prm.eps > 0.0)) throw ParameterError("wkb_initial: eps must be positive");
  if (!(prm.alpha > 0.0 && prm.alpha <= 1.0)) throw ParameterError("wkb_initial: alpha must lie in (0, 1]");
  const double dx = grid.dx();
  const double dx_max = prm.eps / (4.0 * std::abs(prm.p0) + 4.0);
  if (dx > dx_max) {
    std::size_t need = grid.N;
    while (2.0 * grid.L / static_cast<double>(need) > dx_max) need *= 2;
    throw ParameterError("wkb_initial: grid spacing " + std::to_string(dx) + " does not resolve eps=" +
                         std::to_string(prm.eps) + "; need N >= " + std::to_string(need));
  }
  const double scale = std::pow(prm.eps, prm.alpha);
  const double reach = std::abs(prm.x0) + prm.phi0.support_radius() * scale + 4.0 * dx;
  if (reach > grid.L) {
    throw ParameterError("wkb_initial: envelope does not fit in the box; need L >= " + std::to_string(reach));
  }
  WaveFunction psi;
  psi.grid = grid;
  psi.eps = prm.eps;
  psi.values.resize(grid.N);
  const double amp = std::pow(prm.eps, -0.5 * prm.alpha);
  for (std::size_t j = 0; j < grid.N; ++j) {
    const double x = grid.x(j);
    const double env = amp * prm.phi0.value((x - prm.x0) / scale);
    psi.values[j] = env == 0.0 ? cplx(0.0) : env * std::polar(1.0, x * prm.p0 / prm.eps);
  }
  const double nrm = psi.norm();
  if (!(nrm > 0.0)) throw NumericalError("wkb_initial: datum vanishes on the grid");
  if (correction) *correction = std::abs(1.0 - nrm);
  for (auto& v : psi.values) v /= nrm;
  return psi;
}

// ============================================================================
// Propagation
// ============================================================================

double clamp_radius(const Grid1D& grid) { return 2.0 * grid.dx(); }

std::vector<double> potential_on_grid(const fields::Potential& U, const Grid1D& grid) {
  if (U.n != 1) throw DimensionError("potential_on_grid: quantum runs are one-dimensional");
  std::vector<double> v(grid.N);
  const double rc = clamp_radius(grid);
  for (std::size_t j = 0; j < grid.N; ++j) {
    const double x = grid.x(j);
    v[j] = U.clamped_value(std::span<const double>(&x, 1), rc);
    if (!std::isfinite(v[j])) {
      throw NumericalError("potential_on_grid: non-finite potential at x=" + std::to_string(x));
    }
  }
  return v;
}

namespace {

class SplitStepper {
 public:
  SplitStepper(const Grid1D& grid, double eps, const std::vector<double>& U, double dt)
      : fft_(grid.N), half_(grid.N), kin_(grid.N) {
    for (std::size_t j = 0; j < grid.N; ++j) {
      half_[j] = std::polar(1.0, -U[j] * dt / (2.0 * eps));
      const double k = grid.wavenumber(j);
      kin_[j] = std::polar(1.0 / static_cast<double>(grid.N), -eps * k * k * dt / 2.0);
    }
  }

  void step(std::vector<cplx>& psi, std::size_t count) const {
    if (count == 0) return;
    const std::size_t n = psi.size();
    for (std::size_t j = 0; j < n; ++j) psi[j] *= half_[j];
    for (std::size_t s = 0; s < count; ++s) {
      fft_.forward(psi.data());
      for (std::size_t j = 0; j < n; ++j) psi[j] *= kin_[j];
      fft_.inverse(psi.data());
      // Adjacent half potential steps merge into one full step.
      if (s + 1 < count) {
        for (std::size_t j = 0; j < n; ++j) psi[j] *= half_[j] * half_[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) psi[j] *= half_[j];
  }

 private:
  Fft fft_;
  std::vector<cplx> half_;
  std::vector<cplx> kin_;
};

}  // namespace

WaveFunction evolve(const WaveFunction& psi, const fields::Potential& U, double dt, std::size_t steps) {
  if (psi.values.size() != psi.grid.N) throw DimensionError("evolve: values do not match grid");
  if (!std::isfinite(dt)) throw ParameterError("evolve: dt must be finite");
  WaveFunction out = psi;
  if (steps == 0 || dt == 0.0) return out;
  const auto V = potential_on_grid(U, psi.grid);
  SplitStepper stepper(psi.grid, psi.eps, V, dt);
  stepper.step(out.values, steps);
  return out;
}

std::vector<WaveFunction> propagate(const WaveFunction& psi0, const fields::Potential& U,
                                    const std::vector<double>& times, double dt_max) {
  if (times.empty() || times.front() != 0.0) throw ParameterError("propagate: times must start at 0");
  if (!(dt_max > 0.0)) throw ParameterError("propagate: dt_max must be positive");
  const auto V = potential_on_grid(U, psi0.grid);
  std::vector<WaveFunction> out;
  out.reserve(times.size());
  out.push_back(psi0);
  WaveFunction cur = psi0;
  // Equal intervals share one stepper.
  double cached_dt = -1.0;
  std::unique_ptr<SplitStepper> stepper;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double span = times[k] - times[k - 1];
    if (!(span > 0.0)) throw ParameterError("propagate: times must increase");
    const auto m = static_cast<std::size_t>(std::ceil(span / dt_max - 1e-9));
    const double dt = span / static_cast<double>(m);
    if (!stepper || dt != cached_dt) {
      stepper = std::make_unique<SplitStepper>(psi0.grid, psi0.eps, V, dt);
      cached_dt = dt;
    }
    stepper->step(cur.values, m);
    out.push_back(cur);
  }
  return out;
}

std::vector<WaveFunction> propagate_backward(const WaveFunction& psi0, const fields::Potential& U,
                                             const std::vector<double>& times, double dt_max) {
  auto states = propagate(conjugate(psi0), U, times, dt_max);
  for (auto& s : states) s = conjugate(s);
  return states;
}

// ============================================================================
// Gaussian packet
// ============================================================================

double GaussianPacket::q(double t) const {
  if (omega == 0.0) return q0 + p0 * t;
  return q0 * std::cos(omega * t) + p0 / omega * std::sin(omega * t);
}

double GaussianPacket::p(double t) const {
  if (omega == 0.0) return p0;
  return -q0 * omega * std::sin(omega * t) + p0 * std::cos(omega * t);
}

cplx GaussianPacket::A(double t) const {
  if (omega == 0.0) return {sigma, t / sigma};
  return {sigma * std::cos(omega * t), std::sin(omega * t) / (sigma * omega)};
}

cplx GaussianPacket::B(double t) const {
  if (omega == 0.0) return {0.0, 1.0 / sigma};
  return {-sigma * omega * std::sin(omega * t), std::cos(omega * t) / sigma};
}

double GaussianPacket::action(double t) const {
  if (omega == 0.0) return 0.5 * p0 * p0 * t - v0 * t;
  const double a = q0, b = p0 / omega, w = omega;
  return 0.25 * w * (b * b - a * a) * std::sin(2 * w * t) + 0.5 * w * a * b * (std::cos(2 * w * t) - 1.0) - v0 * t;
}

WaveFunction GaussianPacket::sample(const Grid1D& grid, double t) const {
  // Continuous branch of arg A along [0, t].
  const std::size_t pieces = static_cast<std::size_t>(std::ceil(std::abs(omega * t) / 0.1)) + 1;
  double theta = 0.0;
  cplx prev = A(0.0);
  for (std::size_t i = 1; i <= pieces; ++i) {
    const cplx cur = A(t * static_cast<double>(i) / static_cast<double>(pieces));
    theta += std::arg(cur / prev);
    prev = cur;
  }
  const cplx a = A(t), b = B(t);
  const cplx amp = std::pow(pi * eps, -0.25) * std::polar(1.0 / std::sqrt(std::abs(a)), -0.5 * theta);
  const double qt = q(t), pt = p(t), S = action(t);
  WaveFunction psi;
  psi.grid = grid;
  psi.eps = eps;
  psi.values.resize(grid.N);
  const cplx I(0.0, 1.0);
  for (std::size_t j = 0; j < grid.N; ++j) {
    const double y = grid.x(j) - qt;
    psi.values[j] = amp * std::exp(I / eps * (0.5 * b / a * y * y + pt * y + S));
  }
  return psi;
}

}  // namespace rlf::quantum
