#include "rlf/weakform.hpp"

#include <algorithm>
#include <cmath>

namespace rlf::weakform {

double TimeTestFunction::value(double t) const {
  const double s = (2.0 * t - a - b) / (b - a);
  if (std::abs(s) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double TimeTestFunction::derivative(double t) const {
  const double s = (2.0 * t - a - b) / (b - a);
  if (std::abs(s) >= 1.0) return 0.0;
  const double q = 1.0 - s * s;
  return std::exp(1.0 - 1.0 / q) * (-2.0 * s / (q * q)) * (2.0 / (b - a));
}

void check_support_margin(const TestFunction& phi, const SingularSet& S, std::size_t n, double margin) {
  if (S.is_empty()) return;
  if (phi.support.dim() != 2 * n) throw DimensionError("test function dimension does not match phase space");
  Box xbox(Vec(phi.support.lo.begin(), phi.support.lo.begin() + static_cast<std::ptrdiff_t>(n)),
           Vec(phi.support.hi.begin(), phi.support.hi.begin() + static_cast<std::ptrdiff_t>(n)));
  const double d = S.distance_to_box(xbox);
  if (!(d >= margin)) {
    throw ParameterError("test function support comes within " + std::to_string(d) +
                         " of the singular set (margin " + std::to_string(margin) + ")");
  }
}

std::vector<double> pairing_series(const MeasureCurve& curve, const TestFunction& phi) {
  std::vector<double> out(curve.slices.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = measures::integrate_test(curve.slices[k], phi);
  return out;
}

namespace {

std::vector<double> trapezoid_weights(const std::vector<double>& t) {
  std::vector<double> w(t.size(), 0.0);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double h = t[k + 1] - t[k];
    w[k] += 0.5 * h;
    w[k + 1] += 0.5 * h;
  }
  return w;
}

// sum_i w_i <b(z_i), grad phi(z_i)> over particles inside phi's support.
double transport_pairing(const ParticleMeasure& mu, const PhaseSpaceField& b, const TestFunction& phi) {
  const std::size_t d = mu.dim();
  Vec g(d), v(d);
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto z = mu.point(i);
    if (!phi.support.contains(z)) continue;
    phi.gradient(z, g);
    b.eval(z, v);
    s += mu.weight(i) * dot(g, v);
  }
  return s;
}

void check_curve(const MeasureCurve& c) {
  if (c.times.size() != c.slices.size()) throw DimensionError("measure curve: times and slices differ in length");
  if (c.times.empty()) throw ParameterError("measure curve is empty");
}

}  // namespace

double weak_residual(const MeasureCurve& curve, const PhaseSpaceField& b, const TestFunction& phi,
                     const TimeTestFunction& theta, double margin) {
  check_curve(curve);
  if (!phi.gradient) throw ParameterError("weak_residual: test function needs a gradient");
  if (phi.dim != b.dim()) throw DimensionError("weak_residual: test function dimension mismatch");
  check_support_margin(phi, b.singular_set(), b.n(), margin);
  const auto w = trapezoid_weights(curve.times);
  double total = 0.0;
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    const double t = curve.times[k];
    const double th = theta.value(t), dth = theta.derivative(t);
    if (th == 0.0 && dth == 0.0) continue;
    double term = 0.0;
    if (dth != 0.0) term += dth * measures::integrate_test(curve.slices[k], phi);
    if (th != 0.0) term += th * transport_pairing(curve.slices[k], b, phi);
    total += w[k] * term;
  }
  return std::abs(total);
}

double sup_weak_distance(const MeasureCurve& a, const MeasureCurve& b, const TestFunctionDictionary& dict) {
  check_curve(a);
  check_curve(b);
  if (a.times.size() != b.times.size()) throw DimensionError("sup_weak_distance: time grids differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.times.size(); ++k) {
    if (std::abs(a.times[k] - b.times[k]) > 1e-12) throw DimensionError("sup_weak_distance: time grids differ");
    worst = std::max(worst, measures::weak_distance(a.slices[k], b.slices[k], dict));
  }
  return worst;
}

MeasureCurve restrict_to_times(const MeasureCurve& curve, const std::vector<double>& times) {
  check_curve(curve);
  MeasureCurve out;
  out.provenance = curve.provenance;
  out.excluded_mass = curve.excluded_mass;
  std::size_t k = 0;
  for (double t : times) {
    while (k < curve.times.size() && curve.times[k] < t - 1e-12) ++k;
    if (k == curve.times.size() || std::abs(curve.times[k] - t) > 1e-12) {
      throw ParameterError("restrict_to_times: " + std::to_string(t) + " is not a grid time");
    }
    out.times.push_back(curve.times[k]);
    out.slices.push_back(curve.slices[k]);
  }
  return out;
}

// ============================================================================
// Finite volumes
// ============================================================================

GridDensity GridCurve::density(std::size_t k) const {
  GridDensity g;
  g.grid = grid;
  g.values = values.at(k);
  g.spill = outflow.at(k);
  return g;
}

double GridCurve::mass(std::size_t k) const {
  double s = 0.0;
  for (double v : values.at(k)) s += v;
  return s * grid.cell_volume();
}

GridCurve solve_functional_continuity(const GridDensity& w0, const PhaseSpaceField& b,
                                      const std::vector<double>& times, const FiniteVolumeOptions& opts) {
  const GridSpec& grid = w0.grid;
  const std::size_t d = grid.dim();
  const std::size_t n = b.n();
  if (d != b.dim()) throw DimensionError("solve_functional_continuity: grid dimension does not match field");
  if (times.empty() || times.front() != 0.0) throw ParameterError("solve_functional_continuity: times must start at 0");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (!(times[k] > times[k - 1])) throw ParameterError("solve_functional_continuity: times must increase");
  }
  if (!(opts.cfl > 0.0 && opts.cfl <= 1.0)) throw ParameterError("solve_functional_continuity: cfl must lie in (0, 1]");
  for (double v : w0.values) {
    if (!(v >= 0.0)) throw ParameterError("solve_functional_continuity: initial density must be nonnegative");
  }
  if (!b.singular_set().is_empty()) {
    Box xbox(Vec(grid.box.lo.begin(), grid.box.lo.begin() + static_cast<std::ptrdiff_t>(n)),
             Vec(grid.box.hi.begin(), grid.box.hi.begin() + static_cast<std::ptrdiff_t>(n)));
    const double dist = b.singular_set().distance_to_box(xbox);
    if (dist < opts.margin) {
      throw ParameterError("solve_functional_continuity: grid box is within " + std::to_string(dist) +
                           " of the singular set");
    }
  }

  const std::size_t N = grid.total_cells();
  std::vector<std::size_t> stride(d, 1);
  for (std::size_t a = d - 1; a > 0; --a) stride[a - 1] = stride[a] * grid.cells[a];
  std::vector<double> h(d);
  for (std::size_t a = 0; a < d; ++a) h[a] = grid.cell_width(a);

  // Cell-centre velocities; along axis a the value is shared by the two cells
  // adjacent to any face normal to a.
  std::vector<double> vel(N * d);
  double rate = 0.0;
  {
    Vec f(d);
    for (std::size_t i = 0; i < N; ++i) {
      const Vec z = grid.cell_center(i);
      b.eval(z, f);
      double r = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        if (!std::isfinite(f[a])) throw NumericalError("solve_functional_continuity: non-finite field on grid");
        vel[i * d + a] = f[a];
        r += std::abs(f[a]) / h[a];
      }
      rate = std::max(rate, r);
    }
  }
  double dt_target = rate > 0.0 ? opts.cfl / rate : kInf;
  if (opts.dt > 0.0) {
    if (opts.dt * rate > opts.cfl) {
      throw NumericalError("solve_functional_continuity: dt=" + std::to_string(opts.dt) +
                           " violates the CFL limit; use dt <= " + std::to_string(opts.cfl / rate));
    }
    dt_target = opts.dt;
  }

  GridCurve out;
  out.grid = grid;
  out.times = times;
  out.initial_mass = 0.0;
  for (double v : w0.values) out.initial_mass += v;
  out.initial_mass *= grid.cell_volume();
  out.dt = 0.0;

  std::vector<double> w = w0.values, dw(N);
  double outflow = 0.0;
  const double vol = grid.cell_volume();
  out.values.push_back(w);
  out.outflow.push_back(0.0);
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double span = times[k] - times[k - 1];
    const std::size_t m = rate > 0.0 ? static_cast<std::size_t>(std::ceil(span / dt_target - 1e-12)) : 1;
    const double dt = span / static_cast<double>(std::max<std::size_t>(m, 1));
    out.dt = std::max(out.dt, dt);
    for (std::size_t step = 0; step < std::max<std::size_t>(m, 1); ++step) {
      if (rate == 0.0) break;
      std::fill(dw.begin(), dw.end(), 0.0);
      double out_step = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double inv_h = 1.0 / h[a];
        const double face_area = vol * inv_h;
        for (std::size_t i = 0; i < N; ++i) {
          const std::size_t ca = (i / stride[a]) % grid.cells[a];
          const double v = vel[i * d + a];
          if (ca + 1 < grid.cells[a]) {
            const std::size_t j = i + stride[a];
            const double F = v > 0.0 ? v * w[i] : v * w[j];
            dw[i] -= F * inv_h;
            dw[j] += F * inv_h;
          } else if (v > 0.0) {
            dw[i] -= v * w[i] * inv_h;
            out_step += v * w[i] * face_area;
          }
          if (ca == 0 && v < 0.0) {
            dw[i] += v * w[i] * inv_h;
            out_step -= v * w[i] * face_area;
          }
        }
      }
      for (std::size_t i = 0; i < N; ++i) w[i] = std::max(0.0, w[i] + dt * dw[i]);
      outflow += dt * out_step;
      ++out.steps;
    }
    out.values.push_back(w);
    out.outflow.push_back(outflow);
  }
  return out;
}

double l1_distance(const GridDensity& a, const GridDensity& b) {
  if (a.grid.cells != b.grid.cells || a.grid.box.lo != b.grid.box.lo || a.grid.box.hi != b.grid.box.hi) {
    throw DimensionError("l1_distance: grids differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += std::abs(a.values[i] - b.values[i]);
  return s * a.grid.cell_volume();
}

// ============================================================================
// Statistics
// ============================================================================

namespace {

void check_family(const CurveFamily& f) {
  if (f.curves.empty()) throw ParameterError("curve family is empty");
  if (f.weights.size() != f.curves.size()) throw DimensionError("curve family: weights and curves differ in length");
  for (const auto& c : f.curves) check_curve(c);
}

double time_average(const std::vector<double>& t, const std::vector<double>& v) {
  if (t.size() == 1) return v.front();
  const auto w = trapezoid_weights(t);
  double s = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) s += w[k] * v[k];
  return s / (t.back() - t.front());
}

bool nonincreasing(const std::vector<double>& v, double floor) {
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (std::max(v[k], floor) > std::max(v[k - 1], floor)) return false;
  }
  return true;
}

}  // namespace

RegularityStat uniform_regularity_stat(const CurveFamily& family, const std::vector<TestFunction>& phis,
                                       double C, double slack) {
  check_family(family);
  if (phis.empty()) throw ParameterError("uniform_regularity_stat: empty test-function set");
  RegularityStat st;
  st.bound = C;
  st.slack = slack;
  const auto& times = family.curves.front().times;
  for (std::size_t f = 0; f < phis.size(); ++f) {
    const double I = phis[f].integral;
    if (!(I > 0.0)) throw ParameterError("uniform_regularity_stat: test function needs a positive known integral");
    std::vector<double> avg(times.size(), 0.0);
    for (std::size_t w = 0; w < family.size(); ++w) {
      const auto series = pairing_series(family.curves[w], phis[f]);
      if (series.size() != avg.size()) throw DimensionError("uniform_regularity_stat: members use different time grids");
      for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += family.weights[w] * series[k];
    }
    for (std::size_t k = 0; k < avg.size(); ++k) {
      const double r = avg[k] / I;
      if (r > st.value) {
        st.value = r;
        st.worst_time = times[k];
        st.worst_function = f;
      }
    }
  }
  st.pass = st.value <= C * (1.0 + slack);
  return st;
}

DecayStat decay_stat(const std::vector<CurveFamily>& families, double beta, const std::vector<double>& deltas,
                     double R, const SingularSet& S, double threshold, double max_ratio) {
  if (families.empty()) throw ParameterError("decay_stat: no families");
  if (deltas.empty()) throw ParameterError("decay_stat: empty delta list");
  if (!(beta > 1.0)) throw ParameterError("decay_stat: beta must exceed 1");
  for (std::size_t j = 0; j < deltas.size(); ++j) {
    if (!(deltas[j] > 0.0)) throw ParameterError("decay_stat: delta must be positive");
    if (j > 0 && !(deltas[j] < deltas[j - 1])) throw ParameterError("decay_stat: delta list must decrease");
  }
  DecayStat st;
  st.beta = beta;
  st.radius = R;
  st.deltas = deltas;
  st.threshold = threshold;
  st.max_ratio = max_ratio;
  const std::size_t n = S.dim();
  for (double delta : deltas) {
    std::vector<double> row;
    for (const auto& fam : families) {
      check_family(fam);
      double total = 0.0;
      for (std::size_t w = 0; w < fam.size(); ++w) {
        const auto& c = fam.curves[w];
        std::vector<double> per_time(c.times.size(), 0.0);
        for (std::size_t k = 0; k < c.times.size(); ++k) {
          const auto& mu = c.slices[k];
          if (mu.dim() != 2 * n) throw DimensionError("decay_stat: curve dimension does not match S");
          double s = 0.0;
          for (std::size_t i = 0; i < mu.size(); ++i) {
            const auto z = mu.point(i);
            if (norm2(z) > R) continue;
            s += mu.weight(i) * fields::decay_integrand(z.subspan(0, n), beta, delta, S);
          }
          per_time[k] = s;
        }
        total += fam.weights[w] * time_average(c.times, per_time);
      }
      row.push_back(total);
    }
    st.values.push_back(std::move(row));
  }
  double lo = kInf, hi = 0.0;
  for (const auto& row : st.values) {
    lo = std::min(lo, row.back());
    hi = std::max(hi, row.back());
  }
  st.value = hi;
  st.stability = hi == 0.0 ? 1.0 : (lo > 0.0 ? hi / lo : kInf);
  st.pass = st.value <= threshold && st.stability <= max_ratio;
  return st;
}

SweepStat space_tightness_stat(const CurveFamily& family, double eps, const std::vector<double>& R_list,
                               double threshold) {
  if (!(eps > 0.0)) throw ParameterError("space_tightness_stat: eps must be positive");
  check_family(family);
  SweepStat st;
  st.parameter = "R";
  st.sweep = R_list;
  st.threshold = threshold;
  std::vector<std::vector<double>> escape(family.size());  // [member][R]
  for (std::size_t w = 0; w < family.size(); ++w) {
    escape[w].assign(R_list.size(), 0.0);
    for (const auto& mu : family.curves[w].slices) {
      for (std::size_t r = 0; r < R_list.size(); ++r) {
        double out = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
          if (norm2(mu.point(i)) > R_list[r]) out += mu.weight(i);
        }
        escape[w][r] = std::max(escape[w][r], out);
      }
    }
  }
  for (std::size_t r = 0; r < R_list.size(); ++r) {
    double frac = 0.0;
    for (std::size_t w = 0; w < family.size(); ++w) {
      if (escape[w][r] > eps) frac += family.weights[w];
    }
    st.fractions.push_back(frac);
  }
  for (std::size_t w = 0; w < family.size(); ++w) st.member_values.push_back(escape[w].empty() ? 0.0 : escape[w].back());
  st.pass = !st.fractions.empty() && nonincreasing(st.fractions, 0.0) && st.fractions.back() <= threshold;
  return st;
}

double time_variation(const MeasureCurve& curve, const TestFunction& phi) {
  check_curve(curve);
  const auto& t = curve.times;
  const std::size_t m = t.size();
  if (m < 3) throw ParameterError("time_variation: need at least three time samples");
  const auto f = pairing_series(curve, phi);
  std::vector<double> df(m);
  for (std::size_t k = 1; k + 1 < m; ++k) {
    // Three-point derivative on a possibly nonuniform grid.
    const double h0 = t[k] - t[k - 1], h1 = t[k + 1] - t[k];
    df[k] = (-h1 / (h0 * (h0 + h1))) * f[k - 1] + ((h1 - h0) / (h0 * h1)) * f[k] + (h0 / (h1 * (h0 + h1))) * f[k + 1];
  }
  {
    const double h0 = t[1] - t[0], h1 = t[2] - t[1];
    df[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1))) * f[0] + ((h0 + h1) / (h0 * h1)) * f[1] - (h0 / (h1 * (h0 + h1))) * f[2];
  }
  {
    const double h0 = t[m - 2] - t[m - 3], h1 = t[m - 1] - t[m - 2];
    df[m - 1] = (h1 / (h0 * (h0 + h1))) * f[m - 3] - ((h0 + h1) / (h0 * h1)) * f[m - 2] +
                ((2 * h1 + h0) / (h1 * (h0 + h1))) * f[m - 1];
  }
  const auto w = trapezoid_weights(t);
  double tv = 0.0;
  for (std::size_t k = 0; k < m; ++k) tv += w[k] * std::abs(df[k]);
  return tv;
}

SweepStat time_tightness_stat(const CurveFamily& family, const std::vector<TestFunction>& phis,
                              const std::vector<double>& M_list, double threshold) {
  check_family(family);
  if (phis.empty()) throw ParameterError("time_tightness_stat: empty test-function set");
  SweepStat st;
  st.parameter = "M";
  st.sweep = M_list;
  st.threshold = threshold;
  for (const auto& c : family.curves) {
    double tv = 0.0;
    for (const auto& phi : phis) tv = std::max(tv, time_variation(c, phi));
    st.member_values.push_back(tv);
  }
  for (double M : M_list) {
    double frac = 0.0;
    for (std::size_t w = 0; w < family.size(); ++w) {
      if (st.member_values[w] > M) frac += family.weights[w];
    }
    st.fractions.push_back(frac);
  }
  st.pass = !st.fractions.empty() && nonincreasing(st.fractions, 0.0) && st.fractions.back() <= threshold;
  return st;
}

LimitContinuityStat limit_continuity_stat(const std::vector<CurveFamily>& families, const PhaseSpaceField& b,
                                          const std::vector<TestFunction>& phis,
                                          const std::vector<TimeTestFunction>& thetas, double floor,
                                          double margin) {
  if (families.empty()) throw ParameterError("limit_continuity_stat: no families");
  if (phis.empty() || thetas.empty()) throw ParameterError("limit_continuity_stat: empty test-function set");
  LimitContinuityStat st;
  st.floor = floor;
  for (const auto& fam : families) {
    check_family(fam);
    double worst = 0.0;
    for (const auto& phi : phis) {
      for (const auto& th : thetas) {
        double avg = 0.0;
        for (std::size_t w = 0; w < fam.size(); ++w) avg += fam.weights[w] * weak_residual(fam.curves[w], b, phi, th, margin);
        worst = std::max(worst, avg);
      }
    }
    st.values.push_back(worst);
  }
  bool ok = true;
  for (std::size_t k = 1; k < st.values.size(); ++k) {
    const double prev = std::max(st.values[k - 1], floor), cur = std::max(st.values[k], floor);
    if (!(cur < prev || (cur == floor && prev == floor))) ok = false;
  }
  st.pass = ok;
  return st;
}

double stability_gap(const CurveFamily& family, const CurveFamily& reference, const TestFunctionDictionary& dict) {
  check_family(family);
  check_family(reference);
  if (family.size() != reference.size()) throw DimensionError("stability_gap: member counts differ");
  double gap = 0.0;
  for (std::size_t w = 0; w < family.size(); ++w) {
    if (family.weights[w] != reference.weights[w]) throw DimensionError("stability_gap: member weights differ");
    gap += family.weights[w] * sup_weak_distance(family.curves[w], reference.curves[w], dict);
  }
  return gap;
}

bool StabilityReport::pass() const {
  return regularity.pass && decay.pass && space_tightness.pass && time_tightness.pass && limit_continuity.pass;
}

nlohmann::json to_json(const RegularityStat& s) {
  return {{"value", s.value},       {"C", s.bound},
          {"slack", s.slack},       {"worst_time", s.worst_time},
          {"worst_function", s.worst_function}, {"pass", s.pass}};
}

namespace {

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const DecayStat& s) {
  return {{"beta", s.beta},           {"R", finite_or_null(s.radius)},
          {"deltas", s.deltas},       {"values", s.values},
          {"value", s.value},         {"stability", finite_or_null(s.stability)},
          {"threshold", finite_or_null(s.threshold)}, {"max_ratio", s.max_ratio},
          {"pass", s.pass}};
}

nlohmann::json to_json(const SweepStat& s) {
  return {{"parameter", s.parameter}, {"sweep", s.sweep},         {"fractions", s.fractions},
          {"member_values", s.member_values}, {"threshold", s.threshold}, {"pass", s.pass}};
}

nlohmann::json to_json(const LimitContinuityStat& s) {
  return {{"values", s.values}, {"floor", s.floor}, {"pass", s.pass}};
}

nlohmann::json to_json(const StabilityReport& r) {
  return {{"uniform_regularity", to_json(r.regularity)},
          {"decay", to_json(r.decay)},
          {"space_tightness", to_json(r.space_tightness)},
          {"time_tightness", to_json(r.time_tightness)},
          {"limit_continuity", to_json(r.limit_continuity)},
          {"stability_gap", r.gaps},
          {"pass", r.pass()}};
}

}  // namespace rlf::weakform
