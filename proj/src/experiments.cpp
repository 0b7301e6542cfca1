#include "rlf/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace rlf::quantum {

SampleSet weighted_samples(const measures::ScalarFn& rho, const Box& box, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ParameterError("weighted_samples: need at least one sample");
  if (!box.bounded()) throw ParameterError("weighted_samples: box must be bounded");
  std::mt19937_64 rng(seed);
  SampleSet s;
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    Vec z(box.dim());
    for (std::size_t a = 0; a < box.dim(); ++a) {
      // 53-bit uniform in [0, 1) built from the raw engine output.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      z[a] = box.lo[a] + u * (box.hi[a] - box.lo[a]);
    }
    const double w = rho(z);
    if (!(w >= 0.0)) throw ParameterError("weighted_samples: density is negative or NaN");
    s.points.push_back(std::move(z));
    s.weights.push_back(w);
    total += w;
  }
  if (!(total > 0.0)) throw ParameterError("weighted_samples: all weights vanish");
  for (double& w : s.weights) w /= total;
  return s;
}

std::vector<double> forward_times(double T, std::size_t per_direction) {
  if (T < 0.0) throw ParameterError("forward_times: horizon must be nonnegative");
  if (T == 0.0) return {0.0};
  return flow::uniform_times(T, per_direction);
}

std::vector<double> symmetric_times(double T, std::size_t per_direction) {
  const auto f = forward_times(T, per_direction);
  std::vector<double> t;
  for (std::size_t k = f.size(); k-- > 1;) t.push_back(-f[k]);
  t.insert(t.end(), f.begin(), f.end());
  return t;
}

namespace {

measures::ParticleMeasure reflect(const measures::ParticleMeasure& mu) {
  const std::size_t d = mu.dim(), n = d / 2;
  std::vector<double> c = mu.coords();
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t a = n; a < d; ++a) c[i * d + a] = -c[i * d + a];
  }
  return measures::ParticleMeasure(d, std::move(c), mu.weights());
}

}  // namespace

weakform::CurveFamily classical_family(std::shared_ptr<const fields::PhaseSpaceField> b,
                                       const measures::MeasureEnsemble& members, double T,
                                       std::size_t per_direction, const flow::StepControl& ctrl) {
  weakform::CurveFamily fam;
  fam.label = "classical";
  const double total = members.total_weight();
  for (double w : members.weights) fam.weights.push_back(w / total);
  if (T == 0.0) {
    for (const auto& mu : members.members) {
      measures::MeasureCurve c;
      c.times = {0.0};
      c.slices = {mu};
      c.provenance = "classical";
      fam.curves.push_back(std::move(c));
    }
    return fam;
  }
  flow::StepControl fc = ctrl;
  fc.samples = per_direction;
  const auto fwd = flow::measure_flow(b, members, T, fc);
  measures::MeasureEnsemble reflected;
  for (std::size_t j = 0; j < members.size(); ++j) reflected.add(members.weights[j], reflect(members.members[j]));
  const auto bwd = flow::measure_flow(b, reflected, T, fc);
  for (std::size_t j = 0; j < members.size(); ++j) {
    measures::MeasureCurve c;
    c.provenance = "classical";
    const auto& f = fwd.curves[j];
    const auto& r = bwd.curves[j];
    for (std::size_t k = r.times.size(); k-- > 1;) {
      c.times.push_back(-r.times[k]);
      c.slices.push_back(reflect(r.slices[k]));
    }
    for (std::size_t k = 0; k < f.times.size(); ++k) {
      c.times.push_back(f.times[k]);
      c.slices.push_back(f.slices[k]);
    }
    c.excluded_mass = f.excluded_mass + r.excluded_mass;
    fam.curves.push_back(std::move(c));
  }
  return fam;
}

void TransformSummary::merge(const TransformSummary& o) {
  states += o.states;
  wigner_states += o.wigner_states;
  wigner_failures += o.wigner_failures;
  seconds += o.seconds;
  max_norm_drift = std::max(max_norm_drift, o.max_norm_drift);
  max_wigner_x_error = std::max(max_wigner_x_error, o.max_wigner_x_error);
  max_wigner_p_error = std::max(max_wigner_p_error, o.max_wigner_p_error);
  max_wigner_imag = std::max(max_wigner_imag, o.max_wigner_imag);
  min_husimi = std::min(min_husimi, o.min_husimi);
  max_husimi_mass_error = std::max(max_husimi_mass_error, o.max_husimi_mass_error);
  max_boundary_amplitude = std::max(max_boundary_amplitude, o.max_boundary_amplitude);
  max_datum_correction = std::max(max_datum_correction, o.max_datum_correction);
}

bool SweepResult::all_ok() const {
  for (const auto& row : cells) {
    for (const auto& c : row) {
      if (!c.ok) return false;
    }
  }
  return true;
}

namespace {

std::size_t pow2_at_least(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m *= 2;
  return m;
}

Grid1D choose_grid(const SweepSpec& spec, const weakform::CurveFamily& reference, double eps) {
  Grid1D g;
  g.N = spec.numerics.N;
  double pmax = 0.0;
  for (const auto& z : spec.centers) pmax = std::max(pmax, std::abs(z.at(1)));
  const double p0max = pmax;
  if (spec.numerics.L > 0.0) {
    g.L = spec.numerics.L;
  } else {
    // Ballistic estimate: classical support over [-T, T] plus the datum reach
    // and Gaussian tails at scale sqrt(eps).
    double xmax = 0.0;
    for (const auto& c : reference.curves) {
      for (const auto& mu : c.slices) {
        double wmax = 0.0;
        for (double w : mu.weights()) wmax = std::max(wmax, w);
        for (std::size_t i = 0; i < mu.size(); ++i) {
          if (mu.weight(i) < 1e-6 * wmax) continue;
          xmax = std::max(xmax, std::abs(mu.point(i)[0]));
          pmax = std::max(pmax, std::abs(mu.point(i)[1]));
        }
      }
    }
    const double reach = spec.envelope_reach * std::pow(eps, spec.alpha) + 10.0 * std::sqrt(eps) + 1.0;
    g.L = std::ceil(2.0 * (xmax + reach)) / 2.0;
  }
  // Second bound is the resolution wkb_initial insists on.
  const double dx_max = std::min(eps / (2.0 * pmax + 4.0), eps / (4.0 * p0max + 4.0));
  while (g.dx() > dx_max) g.N *= 2;
  g.N = pow2_at_least(g.N);
  return g;
}

CellResult run_cell(const SweepSpec& spec, const DatumBuilder& datum, const Grid1D& grid, double eps,
                    std::size_t w, const measures::MeasureCurve& ref, const std::vector<double>& fwd,
                    measures::MeasureCurve* husimi_curve) {
  CellResult cell;
  cell.eps = eps;
  cell.sample = w;
  const std::size_t nf = fwd.size();
  try {
    const WaveFunction psi0 = datum(eps, w, grid);
    const auto forward = propagate(psi0, spec.U, fwd, spec.numerics.dt);
    const auto backward = nf > 1 ? propagate_backward(psi0, spec.U, fwd, spec.numerics.dt) : forward;
    auto& ts = cell.transforms;
    std::vector<measures::ParticleMeasure> slices;
    // Full order: backward states reversed (skipping t = 0), then forward.
    std::vector<const WaveFunction*> order;
    for (std::size_t k = nf; k-- > 1;) order.push_back(&backward[k]);
    for (std::size_t k = 0; k < nf; ++k) order.push_back(&forward[k]);
    for (std::size_t s = 0; s < order.size(); ++s) {
      const WaveFunction& psi = *order[s];
      ++ts.states;
      ts.max_norm_drift = std::max(ts.max_norm_drift, std::abs(psi.norm() - 1.0));
      ts.max_boundary_amplitude = std::max(ts.max_boundary_amplitude, psi.boundary_amplitude());
      const auto t0 = std::chrono::steady_clock::now();
      if (spec.numerics.check_transforms && s % std::max<std::size_t>(1, spec.numerics.wigner_stride) == 0) {
        ++ts.wigner_states;
        try {
          const auto wc = wigner_marginals(psi, spec.numerics.alias_tol);
          ts.max_wigner_x_error = std::max(ts.max_wigner_x_error, wc.x_error);
          ts.max_wigner_p_error = std::max(ts.max_wigner_p_error, wc.p_error);
          ts.max_wigner_imag = std::max(ts.max_wigner_imag, wc.imag_part);
        } catch (const NumericalError&) {
          ++ts.wigner_failures;
        }
      }
      double mn = 0.0;
      const auto H = husimi(psi, spec.numerics.husimi, &mn);
      ts.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ts.min_husimi = std::min(ts.min_husimi, mn);
      ts.max_husimi_mass_error = std::max(ts.max_husimi_mass_error, std::abs(H.integral() - 1.0));
      slices.push_back(husimi_to_measure(H, spec.numerics.threshold));
    }
    const std::size_t zero = nf - 1;  // index of t = 0 in the full order
    for (std::size_t k = 0; k < slices.size(); ++k) {
      const double d = dual_distance(slices[k], ref.slices.at(k), spec.dict);
      cell.distances.push_back(d);
      if (k >= zero) cell.sup_forward = std::max(cell.sup_forward, d);
      if (k <= zero) cell.sup_backward = std::max(cell.sup_backward, d);
    }
    husimi_curve->times = ref.times;
    husimi_curve->slices = std::move(slices);
    husimi_curve->provenance = "husimi eps=" + format_double(eps) + " sample=" + std::to_string(w);
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.reason = e.what();
  }
  return cell;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const DatumBuilder& datum, weakform::CurveFamily reference) {
  if (spec.eps_list.empty()) throw ParameterError("run_sweep: empty eps list");
  for (std::size_t i = 0; i < spec.eps_list.size(); ++i) {
    if (!(spec.eps_list[i] > 0.0)) throw ParameterError("run_sweep: eps must be positive");
    if (i > 0 && !(spec.eps_list[i] < spec.eps_list[i - 1])) throw ParameterError("run_sweep: eps list must decrease");
  }
  SweepResult res;
  res.times = symmetric_times(spec.T, spec.per_direction);
  res.eps_list = spec.eps_list;
  const auto fwd = forward_times(spec.T, spec.per_direction);
  const std::size_t ne = spec.eps_list.size(), ns = reference.size();
  for (const auto& c : reference.curves) {
    if (c.times.size() != res.times.size()) throw DimensionError("run_sweep: reference curves use a different time grid");
  }
  for (double eps : spec.eps_list) {
    res.grids.push_back(choose_grid(spec, reference, eps));
    res.clamp_radii.push_back(spec.U.has_coulomb() ? clamp_radius(res.grids.back()) : 0.0);
  }
  res.cells.assign(ne, std::vector<CellResult>(ns));
  std::vector<std::vector<measures::MeasureCurve>> curves(ne, std::vector<measures::MeasureCurve>(ns));
  parallel_for(ne * ns, [&](std::size_t idx) {
    const std::size_t e = idx / ns, w = idx % ns;
    res.cells[e][w] = run_cell(spec, datum, res.grids[e], spec.eps_list[e], w, reference.curves[w], fwd, &curves[e][w]);
  });
  for (std::size_t e = 0; e < ne; ++e) {
    double D = 0.0, Df = 0.0, Db = 0.0;
    bool ok = true;
    TransformSummary local;
    weakform::CurveFamily fam;
    fam.label = "husimi eps=" + format_double(spec.eps_list[e]);
    fam.weights = reference.weights;
    for (std::size_t w = 0; w < ns; ++w) {
      const auto& c = res.cells[e][w];
      local.merge(c.transforms);
      if (!c.ok) {
        ok = false;
        res.warnings.push_back("cell eps=" + format_double(c.eps) + " sample=" + std::to_string(w) + " failed: " + c.reason);
        continue;
      }
      D += reference.weights[w] * std::max(c.sup_forward, c.sup_backward);
      Df += reference.weights[w] * c.sup_forward;
      Db += reference.weights[w] * c.sup_backward;
      fam.curves.push_back(std::move(curves[e][w]));
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    res.D.push_back(ok ? D : nan);
    res.D_forward.push_back(ok ? Df : nan);
    res.D_backward.push_back(ok ? Db : nan);
    if (!ok) fam.weights.clear();
    res.families.push_back(std::move(fam));
    res.transforms.merge(local);
    if (local.max_boundary_amplitude > 1e-6) {
      res.warnings.push_back("boundary amplitude " + format_double(local.max_boundary_amplitude) +
                             " exceeds 1e-6 at eps=" + format_double(spec.eps_list[e]) + "; box may be too small");
    }
  }
  res.reference = std::move(reference);
  return res;
}

SweepResult semiclassical_experiment(const SemiclassicalConfig& cfg) {
  if (cfg.samples.size() == 0) throw ParameterError("semiclassical_experiment: no samples");
  auto field = std::make_shared<const fields::PhaseSpaceField>(cfg.U, "semiclassical");
  measures::MeasureEnsemble members;
  for (std::size_t w = 0; w < cfg.samples.size(); ++w) {
    members.add(cfg.samples.weights[w], measures::ParticleMeasure::dirac(cfg.samples.points[w]));
  }
  auto reference = classical_family(field, members, cfg.T, cfg.per_direction, cfg.flow);
  SweepSpec spec;
  spec.U = cfg.U;
  spec.eps_list = cfg.eps_list;
  spec.T = cfg.T;
  spec.per_direction = cfg.per_direction;
  spec.numerics = cfg.numerics;
  spec.dict = measures::default_dictionary(cfg.dict_box, cfg.dict_levels);
  spec.envelope_reach = cfg.phi0.support_radius();
  spec.alpha = cfg.alpha;
  spec.centers = cfg.samples.points;
  const auto& samples = cfg.samples;
  DatumBuilder datum = [&](double eps, std::size_t w, const Grid1D& grid) {
    WKBParams p{samples.points[w][0], samples.points[w][1], cfg.alpha, eps, cfg.phi0};
    return wkb_initial(p, grid);
  };
  return run_sweep(spec, datum, std::move(reference));
}

measures::ParticleMeasure momentum_profile(const Envelope& phi0, double p0, double halfwidth, std::size_t points) {
  if (points < 2) throw ParameterError("momentum_profile: need at least two nodes");
  measures::ParticleMeasure g(1);
  const double h = 2.0 * halfwidth / static_cast<double>(points - 1);
  double total = 0.0;
  std::vector<double> w(points);
  for (std::size_t i = 0; i < points; ++i) {
    w[i] = phi0.fourier_density(-halfwidth + h * static_cast<double>(i)) * h;
    total += w[i];
  }
  for (std::size_t i = 0; i < points; ++i) {
    const double p = p0 - halfwidth + h * static_cast<double>(i);
    g.add(std::span<const double>(&p, 1), w[i] / total);
  }
  return g;
}

Alpha1Result alpha1_experiment(const Alpha1Config& cfg) {
  if (cfg.x_grid.dim() != 1) throw DimensionError("alpha1_experiment: x grid must be one-dimensional");
  Alpha1Result out;
  out.gamma = momentum_profile(cfg.phi0, cfg.p0, cfg.gamma_halfwidth, cfg.gamma_points);
  auto ensemble = measures::product_ensemble(cfg.rho, cfg.x_grid, out.gamma, &out.warnings);
  auto field = std::make_shared<const fields::PhaseSpaceField>(cfg.U, "alpha1");
  auto reference = classical_family(field, ensemble, cfg.T, cfg.per_direction, cfg.flow);

  std::vector<double> x0s;
  for (std::size_t c = 0; c < cfg.x_grid.total_cells(); ++c) x0s.push_back(cfg.x_grid.cell_center(c)[0]);
  SweepSpec spec;
  spec.U = cfg.U;
  spec.eps_list = cfg.eps_list;
  spec.T = cfg.T;
  spec.per_direction = cfg.per_direction;
  spec.numerics = cfg.numerics;
  spec.dict = measures::default_dictionary(cfg.dict_box, cfg.dict_levels);
  spec.envelope_reach = cfg.phi0.support_radius();
  spec.alpha = 1.0;
  for (double x0 : x0s) spec.centers.push_back({x0, cfg.p0});
  DatumBuilder datum = [&](double eps, std::size_t w, const Grid1D& grid) {
    WKBParams p{x0s[w], cfg.p0, 1.0, eps, cfg.phi0};
    return wkb_initial(p, grid);
  };
  out.sweep = run_sweep(spec, datum, std::move(reference));

  // t = 0 marginals of the Husimi measures.
  const std::size_t zero = out.sweep.times.size() / 2;
  Box pbox({cfg.p0 - cfg.gamma_halfwidth}, {cfg.p0 + cfg.gamma_halfwidth});
  const auto pdict = measures::default_dictionary(pbox, cfg.dict_levels + 2);
  for (std::size_t e = 0; e < cfg.eps_list.size(); ++e) {
    const auto& fam = out.sweep.families[e];
    if (fam.curves.size() != x0s.size()) {
      out.marginal_distance.push_back(std::numeric_limits<double>::quiet_NaN());
      out.x_variance.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double dist = 0.0, var = 0.0;
    for (std::size_t w = 0; w < fam.size(); ++w) {
      const auto& mu = fam.curves[w].slices.at(zero);
      measures::ParticleMeasure pm(1);
      double mean = 0.0, m2 = 0.0, mass = 0.0;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        pm.add(mu.point(i).subspan(1, 1), mu.weight(i));
        mean += mu.weight(i) * mu.point(i)[0];
        m2 += mu.weight(i) * mu.point(i)[0] * mu.point(i)[0];
        mass += mu.weight(i);
      }
      mean /= mass;
      dist = std::max(dist, measures::weak_distance(pm, out.gamma, pdict));
      var += fam.weights[w] * (m2 / mass - mean * mean);
    }
    out.marginal_distance.push_back(dist);
    out.x_variance.push_back(var);
  }
  out.warnings.insert(out.warnings.end(), out.sweep.warnings.begin(), out.sweep.warnings.end());
  return out;
}

// ============================================================================
// Hypothesis statistics
// ============================================================================

std::vector<measures::TestFunction> dictionary_level(const Box& box, int level) {
  const auto dict = measures::default_dictionary(box, level + 1);
  std::size_t per_level = 1;
  for (std::size_t a = 0; a < box.dim(); ++a) per_level *= std::size_t{1} << level;
  return {dict.functions.end() - static_cast<std::ptrdiff_t>(per_level), dict.functions.end()};
}

weakform::StabilityReport HypothesisReport::summary() const {
  weakform::StabilityReport r;
  if (!regularity.empty()) r.regularity = regularity.back();
  r.decay = decay;
  if (!space_tightness.empty()) r.space_tightness = space_tightness.back();
  if (!time_tightness.empty()) r.time_tightness = time_tightness.back();
  r.limit_continuity = limit_continuity;
  r.gaps = gaps;
  return r;
}

HypothesisReport hypothesis_statistics(const SweepResult& main, const fields::PhaseSpaceField& b,
                                       const SweepResult& decay_sweep, const fields::SingularSet& S,
                                       const Box& dict_box, const measures::TestFunctionDictionary& dict,
                                       const HypothesisConfig& cfg) {
  if (!main.all_ok()) throw NumericalError("hypothesis_statistics: the sweep has failed cells");
  HypothesisReport rep;
  const auto phis = dictionary_level(dict_box, cfg.test_level);

  // Regularity against the constant of the eps -> 0 limit family.
  rep.C = weakform::uniform_regularity_stat(main.reference, phis, kInf).value;
  rep.regularity_pass = true;
  for (const auto& fam : main.families) {
    rep.regularity.push_back(weakform::uniform_regularity_stat(fam, phis, rep.C, cfg.regularity_slack));
    rep.regularity_pass = rep.regularity_pass && rep.regularity.back().pass;
  }

  // Decay on the Coulomb sweep.
  if (!decay_sweep.all_ok()) throw NumericalError("hypothesis_statistics: the decay sweep has failed cells");
  rep.decay = weakform::decay_stat(decay_sweep.families, cfg.beta, cfg.deltas, cfg.decay_radius, S,
                                   cfg.decay_threshold, cfg.decay_max_ratio);
  rep.decay_pass = rep.decay.pass;

  // Space and time tightness per eps.
  rep.space_pass = rep.time_pass = true;
  for (const auto& fam : main.families) {
    rep.space_tightness.push_back(weakform::space_tightness_stat(fam, cfg.space_eps, cfg.R_list));
    rep.time_tightness.push_back(weakform::time_tightness_stat(fam, phis, cfg.M_list));
    rep.space_pass = rep.space_pass && rep.space_tightness.back().pass;
    rep.time_pass = rep.time_pass && rep.time_tightness.back().pass;
  }

  // Limit continuity with the quadrature baseline of the exact classical curves as floor.
  const double T = main.times.back();
  std::vector<weakform::TimeTestFunction> thetas;
  if (T > 0.0) thetas = {{-T, T}, {-T, 0.0}, {0.0, T}};
  if (!thetas.empty()) {
    rep.limit_baseline = weakform::limit_continuity_stat({main.reference}, b, phis, thetas).values.front();
    rep.limit_continuity = weakform::limit_continuity_stat(main.families, b, phis, thetas, rep.limit_baseline);
    rep.limit_pass = rep.limit_continuity.pass;
  }

  for (const auto& fam : main.families) rep.gaps.push_back(weakform::stability_gap(fam, main.reference, dict));
  return rep;
}

}  // namespace rlf::quantum
