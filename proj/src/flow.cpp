#include "rlf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

namespace rlf::flow {

std::string to_string(Status s) {
  switch (s) {
    case Status::complete:
      return "complete";
    case Status::singular_hit:
      return "singular_hit";
    case Status::escaped:
      return "escaped";
  }
  return "unknown";
}

std::vector<double> uniform_times(double T, std::size_t samples) {
  if (samples < 2) throw ParameterError("uniform_times: need at least two samples");
  if (!(T > 0.0)) throw ParameterError("uniform_times: horizon must be positive");
  std::vector<double> t(samples);
  for (std::size_t k = 0; k < samples; ++k) t[k] = T * static_cast<double>(k) / static_cast<double>(samples - 1);
  t.back() = T;
  return t;
}

namespace {

void hermite(double s, double h, std::span<const double> z0, std::span<const double> f0,
             std::span<const double> z1, std::span<const double> f1, std::span<double> out) {
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = h00 * z0[i] + h10 * h * f0[i] + h01 * z1[i] + h11 * h * f1[i];
  }
}

std::string describe(std::span<const double> z) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < z.size(); ++i) os << (i ? ", " : "") << z[i];
  os << ')';
  return os.str();
}

struct StepOutcome {
  Status status = Status::complete;
  double event_time = kInf;
  double min_dist = kInf;
};

// Core RK4 loop. on_step(t0, z0, f0, t1, z1, f1) is called for every accepted
// step.
template <typename OnStep>
StepOutcome run_rk4(const PhaseSpaceField& b, std::span<const double> z0, double T,
                    const StepControl& ctrl, OnStep&& on_step) {
  const std::size_t d = b.dim();
  const std::size_t n = b.n();
  if (z0.size() != d) throw DimensionError("integrate_trajectory: initial point has wrong dimension");
  if (!(T > 0.0)) throw ParameterError("integrate_trajectory: horizon must be positive");
  if (!(ctrl.dt > 0.0)) throw ParameterError("integrate_trajectory: dt must be positive");
  const bool singular = !b.singular_set().is_empty();

  StepOutcome out;
  Vec z(z0.begin(), z0.end()), f(d), zn(d), fn(d), k2(d), k3(d), k4(d), tmp(d);
  if (singular) {
    const double d0 = b.dist_to_singular(z0.subspan(0, n));
    if (d0 == 0.0) throw SingularError("integrate_trajectory: initial point " + describe(z0) + " lies on the singular set");
    out.min_dist = d0;
    if (d0 < ctrl.min_dist) {
      out.status = Status::singular_hit;
      out.event_time = 0.0;
      return out;
    }
  }
  b.eval(z, f);

  auto stage = [&](std::span<const double> base, std::span<const double> k, double c, Vec& dst) {
    for (std::size_t i = 0; i < d; ++i) tmp[i] = base[i] + c * k[i];
    b.eval(tmp, dst);
  };

  double t = 0.0;
  while (true) {
    const double remaining = T - t;
    if (remaining <= 1e-14 * T) break;
    double h = std::min(ctrl.dt, remaining);
    if (singular) {
      const double dist = b.dist_to_singular(std::span<const double>(z).subspan(0, n));
      const double speed = std::max({norm2(std::span<const double>(z).subspan(n, n)),
                                     norm2(std::span<const double>(f).subspan(n, n)), 1e-9});
      h = std::min(h, std::max(ctrl.guard * dist / speed, ctrl.min_step));
    }
    try {
      stage(z, f, 0.5 * h, k2);
      stage(z, k2, 0.5 * h, k3);
      stage(z, k3, h, k4);
    } catch (const SingularError&) {
      out.status = Status::singular_hit;
      out.event_time = t;
      out.min_dist = 0.0;
      return out;
    }
    for (std::size_t i = 0; i < d; ++i) {
      zn[i] = z[i] + h / 6.0 * (f[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(zn[i])) {
        throw NumericalError("integrate_trajectory: non-finite state at t=" + std::to_string(t) +
                             " from " + describe(z));
      }
    }
    const double tn = (h == remaining) ? T : t + h;
    if (singular) {
      const double dn = b.dist_to_singular(std::span<const double>(zn).subspan(0, n));
      out.min_dist = std::min(out.min_dist, dn);
      if (dn < ctrl.min_dist) {
        out.status = Status::singular_hit;
        out.event_time = tn;
        return out;
      }
    }
    if (norm2(zn) > ctrl.escape_radius) {
      out.status = Status::escaped;
      out.event_time = tn;
      return out;
    }
    b.eval(zn, fn);
    for (double v : fn) {
      if (!std::isfinite(v)) {
        throw NumericalError("integrate_trajectory: non-finite field value at " + describe(zn));
      }
    }
    on_step(t, std::span<const double>(z), std::span<const double>(f), tn,
            std::span<const double>(zn), std::span<const double>(fn));
    t = tn;
    std::swap(z, zn);
    std::swap(f, fn);
  }
  return out;
}

}  // namespace

Vec Trajectory::at(double t) const {
  if (times.empty()) throw ParameterError("Trajectory::at: empty trajectory");
  if (rates.size() != states.size()) throw ParameterError("Trajectory::at: rates unavailable");
  if (t < times.front() || t > times.back()) throw ParameterError("Trajectory::at: time outside trajectory span");
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t k1 = static_cast<std::size_t>(it - times.begin());
  if (k1 >= times.size()) k1 = times.size() - 1;
  if (k1 == 0) k1 = 1;
  if (times.size() == 1) return Vec(state(0).begin(), state(0).end());
  const std::size_t k0 = k1 - 1;
  const double h = times[k1] - times[k0];
  Vec out(dim);
  hermite((t - times[k0]) / h, h, state(k0), rate(k0), state(k1), rate(k1), out);
  return out;
}

Trajectory integrate_trajectory(const PhaseSpaceField& b, std::span<const double> z0, double T,
                                const StepControl& ctrl) {
  Trajectory traj;
  traj.dim = b.dim();
  traj.times.push_back(0.0);
  traj.states.assign(z0.begin(), z0.end());
  bool first = true;
  auto outcome = run_rk4(b, z0, T, ctrl,
                         [&](double, auto, auto f0, double t1, auto z1, auto f1) {
                           if (first) {
                             traj.rates.assign(f0.begin(), f0.end());
                             first = false;
                           }
                           traj.times.push_back(t1);
                           traj.states.insert(traj.states.end(), z1.begin(), z1.end());
                           traj.rates.insert(traj.rates.end(), f1.begin(), f1.end());
                         });
  if (first && outcome.status == Status::complete) {
    // Horizon shorter than the rounding threshold: a single node.
    traj.rates = b.eval(z0);
  }
  if (first && outcome.status != Status::complete) traj.rates.clear();
  traj.status = outcome.status;
  traj.event_time = outcome.event_time;
  traj.min_singular_dist = outcome.min_dist;
  return traj;
}

Trajectory integrate_sampled(const PhaseSpaceField& b, std::span<const double> z0, double T,
                             const StepControl& ctrl, const std::vector<double>& output_times) {
  if (output_times.empty() || output_times.front() != 0.0) {
    throw ParameterError("integrate_sampled: output times must start at 0");
  }
  const std::size_t d = b.dim();
  Trajectory traj;
  traj.dim = d;
  traj.times.push_back(0.0);
  traj.states.assign(z0.begin(), z0.end());
  std::size_t next = 1;
  Vec buf(d);
  auto outcome = run_rk4(b, z0, T, ctrl, [&](double t0, auto za, auto fa, double t1, auto zb, auto fb) {
    const double h = t1 - t0;
    while (next < output_times.size() && output_times[next] <= t1) {
      const double tau = output_times[next];
      if (tau == t1) {
        traj.states.insert(traj.states.end(), zb.begin(), zb.end());
      } else {
        hermite((tau - t0) / h, h, za, fa, zb, fb, buf);
        traj.states.insert(traj.states.end(), buf.begin(), buf.end());
      }
      traj.times.push_back(tau);
      ++next;
    }
  });
  traj.status = outcome.status;
  traj.event_time = outcome.event_time;
  traj.min_singular_dist = outcome.min_dist;
  return traj;
}

Trajectory resample(const Trajectory& traj, const std::vector<double>& times) {
  Trajectory out;
  out.dim = traj.dim;
  out.status = traj.status;
  out.event_time = traj.event_time;
  out.min_singular_dist = traj.min_singular_dist;
  if (traj.size() < 2) throw ParameterError("resample: trajectory needs at least two nodes");
  std::size_t k = 1;
  Vec buf(traj.dim), dbuf(traj.dim);
  for (double t : times) {
    if (t < traj.times.front() || t > traj.times.back()) {
      throw ParameterError("resample: requested time outside the trajectory span");
    }
    while (k + 1 < traj.size() && traj.times[k] < t) ++k;
    const std::size_t k0 = k - 1;
    const double h = traj.times[k] - traj.times[k0];
    const double s = (t - traj.times[k0]) / h;
    hermite(s, h, traj.state(k0), traj.rate(k0), traj.state(k), traj.rate(k), buf);
    // Derivative of the Hermite interpolant.
    const double s2 = s * s;
    const double d00 = (6 * s2 - 6 * s) / h, d10 = 3 * s2 - 4 * s + 1;
    const double d01 = (-6 * s2 + 6 * s) / h, d11 = 3 * s2 - 2 * s;
    for (std::size_t i = 0; i < traj.dim; ++i) {
      dbuf[i] = d00 * traj.state(k0)[i] + d10 * traj.rate(k0)[i] + d01 * traj.state(k)[i] +
                d11 * traj.rate(k)[i];
    }
    out.times.push_back(t);
    out.states.insert(out.states.end(), buf.begin(), buf.end());
    out.rates.insert(out.rates.end(), dbuf.begin(), dbuf.end());
  }
  return out;
}

namespace {

// Integral over [a, b] of the quadratic interpolating (t0,f0),(t1,f1),(t2,f2);
// returns the three weights.
std::array<double, 3> quadratic_weights(double t0, double t1, double t2, double a, double b) {
  auto prim = [](double s, double u, double v) {
    // antiderivative of (s-u)(s-v)
    return s * s * s / 3.0 - (u + v) * s * s / 2.0 + u * v * s;
  };
  const double w0 = (prim(b, t1, t2) - prim(a, t1, t2)) / ((t0 - t1) * (t0 - t2));
  const double w1 = (prim(b, t0, t2) - prim(a, t0, t2)) / ((t1 - t0) * (t1 - t2));
  const double w2 = (prim(b, t0, t1) - prim(a, t0, t1)) / ((t2 - t0) * (t2 - t1));
  return {w0, w1, w2};
}

}  // namespace

double ode_residual(const Trajectory& traj, const PhaseSpaceField& b) {
  if (traj.status != Status::complete) throw ParameterError("ode_residual: trajectory is incomplete");
  const std::size_t m = traj.size();
  const std::size_t d = traj.dim;
  if (m < 3) throw ParameterError("ode_residual: need at least three samples");
  std::vector<double> f(m * d);
  for (std::size_t k = 0; k < m; ++k) b.eval(traj.state(k), std::span<double>(f.data() + k * d, d));
  auto fk = [&](std::size_t k, std::size_t i) { return f[k * d + i]; };
  const auto& t = traj.times;

  Vec even_integral(d, 0.0);  // integral up to the last even node
  double worst = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    Vec integral(d);
    if (k % 2 == 0) {
      const auto w = quadratic_weights(t[k - 2], t[k - 1], t[k], t[k - 2], t[k]);
      for (std::size_t i = 0; i < d; ++i) {
        even_integral[i] += w[0] * fk(k - 2, i) + w[1] * fk(k - 1, i) + w[2] * fk(k, i);
        integral[i] = even_integral[i];
      }
    } else {
      std::size_t a = k - 1, c = k + 1;
      std::size_t q0 = a, q1 = k, q2 = c;
      if (c >= m) {
        q0 = k - 2;
        q1 = k - 1;
        q2 = k;
      }
      const auto w = quadratic_weights(t[q0], t[q1], t[q2], t[a], t[k]);
      for (std::size_t i = 0; i < d; ++i) {
        integral[i] = even_integral[i] + w[0] * fk(q0, i) + w[1] * fk(q1, i) + w[2] * fk(q2, i);
      }
    }
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double r = traj.state(k)[i] - traj.state(0)[i] - integral[i];
      s += r * r;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

// ============================================================================
// FlowMap
// ============================================================================

double FlowMap::invalid_fraction() const {
  const double m = base.total_mass();
  return m > 0.0 ? invalid_mass / m : 0.0;
}

Trajectory FlowMap::trajectory(std::size_t i) const {
  Trajectory tr;
  tr.dim = dim();
  tr.status = status[i];
  tr.event_time = event_time[i];
  tr.min_singular_dist = min_singular_dist[i];
  const std::size_t count = valid(i) ? samples() : 0;
  for (std::size_t k = 0; k < count; ++k) {
    tr.times.push_back(times[k]);
    const auto z = state(i, k);
    tr.states.insert(tr.states.end(), z.begin(), z.end());
    const Vec f = field->eval(z);
    tr.rates.insert(tr.rates.end(), f.begin(), f.end());
  }
  return tr;
}

ParticleMeasure FlowMap::slice(std::size_t k) const {
  ParticleMeasure mu(dim());
  for (std::size_t i = 0; i < size(); ++i) {
    if (valid(i)) mu.add(state(i, k), base.weight(i));
  }
  return mu;
}

FlowMap flow_map(std::shared_ptr<const PhaseSpaceField> b, const ParticleMeasure& nu, double T,
                 const StepControl& ctrl) {
  if (!b) throw ParameterError("flow_map: null field");
  if (nu.dim() != b->dim()) {
    throw DimensionError("flow_map: measure dimension " + std::to_string(nu.dim()) +
                         " does not match field dimension " + std::to_string(b->dim()));
  }
  FlowMap F;
  F.base = nu;
  F.times = uniform_times(T, ctrl.samples);
  F.horizon = T;
  F.field = b;
  const std::size_t N = nu.size(), S = F.times.size(), d = nu.dim();
  F.states.assign(N * S * d, std::numeric_limits<double>::quiet_NaN());
  F.status.assign(N, Status::complete);
  F.event_time.assign(N, kInf);
  F.min_singular_dist.assign(N, kInf);

  parallel_for(N, [&](std::size_t i) {
    const Trajectory tr = integrate_sampled(*b, nu.point(i), T, ctrl, F.times);
    F.status[i] = tr.status;
    F.event_time[i] = tr.event_time;
    F.min_singular_dist[i] = tr.min_singular_dist;
    std::copy(tr.states.begin(), tr.states.end(), F.states.begin() + i * S * d);
  });

  double invalid = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (!F.valid(i)) invalid += nu.weight(i);
  }
  F.invalid_mass = invalid;
  if (F.invalid_fraction() > ctrl.max_invalid) {
    throw NumericalError("flow_map: invalid mass fraction " + std::to_string(F.invalid_fraction()) +
                         " exceeds tolerance " + std::to_string(ctrl.max_invalid));
  }
  return F;
}

RlfReport check_rlf(const FlowMap& F, double C, const measures::GridSpec& grid, double bandwidth,
                    const RlfCheckOptions& opts) {
  RlfReport rep;
  rep.invalid_fraction = F.invalid_fraction();

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < F.size(); ++i) {
    if (F.valid(i)) valid.push_back(i);
  }
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> chosen = valid;
  if (chosen.size() > opts.residual_subsample) {
    // Partial Fisher-Yates with an explicit index draw keeps the sample
    // independent of the standard library's shuffle implementation.
    for (std::size_t k = 0; k < opts.residual_subsample; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(rng() % (chosen.size() - k));
      std::swap(chosen[k], chosen[j]);
    }
    chosen.resize(opts.residual_subsample);
  }
  std::vector<double> residuals(chosen.size(), 0.0);
  if (F.samples() >= 3) {
    parallel_for(chosen.size(), [&](std::size_t k) {
      residuals[k] = ode_residual(F.trajectory(chosen[k]), *F.field);
    });
  }
  for (double r : residuals) rep.max_residual = std::max(rep.max_residual, r);
  rep.residual_checked = chosen.size();
  rep.residual_pass = F.samples() >= 3 && rep.max_residual <= opts.residual_tol;

  const std::size_t nslices = std::max<std::size_t>(opts.slices, 2);
  bool density_ok = true;
  for (std::size_t s = 0; s < nslices; ++s) {
    const double target = F.horizon * static_cast<double>(s) / static_cast<double>(nslices - 1);
    std::size_t k = 0;
    for (std::size_t j = 1; j < F.samples(); ++j) {
      if (std::abs(F.times[j] - target) < std::abs(F.times[k] - target)) k = j;
    }
    const auto dens = measures::density_estimate(F.slice(k), grid, bandwidth);
    const auto chk = measures::check_density_bound(dens, C, opts.slack);
    rep.slices.push_back({F.times[k], chk.max_density, dens.spill, chk.pass});
    density_ok = density_ok && chk.pass;
  }
  rep.pass = rep.residual_pass && density_ok;
  return rep;
}

MeasureCurve superpose(const FlowMap& F, std::span<const double> weights) {
  if (weights.size() != F.size()) throw DimensionError("superpose: weights do not match base cloud");
  MeasureCurve curve;
  curve.times = F.times;
  curve.provenance = "superposition";
  for (std::size_t i = 0; i < F.size(); ++i) {
    if (weights[i] < 0.0) throw ParameterError("superpose: negative weight");
    if (!F.valid(i)) curve.excluded_mass += weights[i];
  }
  curve.slices.reserve(F.samples());
  for (std::size_t k = 0; k < F.samples(); ++k) {
    ParticleMeasure mu(F.dim());
    for (std::size_t i = 0; i < F.size(); ++i) {
      if (weights[i] == 0.0 || !F.valid(i)) continue;
      mu.add(F.state(i, k), weights[i]);
    }
    curve.slices.push_back(std::move(mu));
  }
  return curve;
}

namespace {

struct PointKey {
  std::vector<double> x;
  bool operator<(const PointKey& o) const { return x < o.x; }
};

}  // namespace

MeasureCurve superpose(const FlowMap& F, const ParticleMeasure& mu) {
  if (mu.dim() != F.dim()) throw DimensionError("superpose: measure dimension mismatch");
  std::map<PointKey, std::size_t> index;
  for (std::size_t i = 0; i < F.size(); ++i) {
    const auto x = F.base.point(i);
    index.emplace(PointKey{{x.begin(), x.end()}}, i);
  }
  std::vector<double> w(F.size(), 0.0);
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const auto x = mu.point(j);
    auto it = index.find(PointKey{{x.begin(), x.end()}});
    if (it == index.end()) {
      throw ParameterError("superpose: particle " + std::to_string(j) + " is not a base point of the flow");
    }
    w[it->second] += mu.weight(j);
  }
  return superpose(F, w);
}

ParticleMeasure EnsembleFlow::expectation_slice(std::size_t k) const {
  measures::MeasureEnsemble e;
  for (std::size_t j = 0; j < curves.size(); ++j) e.add(weights[j], curves[j].slices.at(k));
  return measures::expectation(e);
}

EnsembleFlow measure_flow(std::shared_ptr<const PhaseSpaceField> b, const measures::MeasureEnsemble& nu,
                          double T, const StepControl& ctrl) {
  if (nu.members.empty()) throw ParameterError("measure_flow: empty ensemble");
  // Union of member supports, deduplicated.
  std::map<PointKey, std::size_t> index;
  ParticleMeasure support(nu.dim());
  for (const auto& mu : nu.members) {
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const auto x = mu.point(i);
      PointKey key{{x.begin(), x.end()}};
      if (index.emplace(key, support.size()).second) support.add(x, 0.0);
    }
  }
  // Base weights: the expectation restricted to the union support.
  std::vector<double> base_w(support.size(), 0.0);
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const auto& mu = nu.members[j];
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const auto x = mu.point(i);
      base_w[index.at(PointKey{{x.begin(), x.end()}})] += nu.weights[j] * mu.weight(i);
    }
  }
  ParticleMeasure base(support.dim(), support.coords(), base_w);

  EnsembleFlow out{flow_map(std::move(b), base, T, ctrl), nu.weights, {}};
  out.curves.reserve(nu.size());
  for (std::size_t j = 0; j < nu.size(); ++j) {
    std::vector<double> w(base.size(), 0.0);
    const auto& mu = nu.members[j];
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const auto x = mu.point(i);
      w[index.at(PointKey{{x.begin(), x.end()}})] += mu.weight(i);
    }
    out.curves.push_back(superpose(out.flow, w));
    out.curves.back().provenance = "member " + std::to_string(j);
  }
  return out;
}

}  // namespace rlf::flow
