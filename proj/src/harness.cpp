#include "rlf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "rlf/experiments.hpp"
#include "rlf/fields.hpp"
#include "rlf/flow.hpp"
#include "rlf/weakform.hpp"

namespace rlf::harness {

using nlohmann::json;

const std::vector<std::string>& registered_experiments() {
  static const std::vector<std::string> names{"rlf-check", "stability-hypotheses", "semiclassical", "alpha1",
                                              "oracle-consistency"};
  return names;
}

std::string version_stamp() { return "rlf-lab 0.1.0"; }

// ============================================================================
// Config serialization
// ============================================================================

namespace {

// Reads keys of one JSON object and rejects the ones nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ParameterError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParameterError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ParameterError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json box_json(const BoxSpec& b) { return {{"lo", b.lo}, {"hi", b.hi}}; }

BoxSpec box_from(const json& j, const std::string& where) {
  BoxSpec b;
  Reader r(j, where);
  r.get("lo", b.lo);
  r.get("hi", b.hi);
  r.finish();
  if (b.lo.size() != b.hi.size()) throw ParameterError(where + ": lo and hi differ in dimension");
  for (std::size_t a = 0; a < b.lo.size(); ++a) {
    if (!(b.lo[a] < b.hi[a])) throw ParameterError(where + ": empty box");
  }
  return b;
}

json grid_json(const GridSpecConfig& g) { return {{"box", box_json(g.box)}, {"cells", g.cells}}; }

GridSpecConfig grid_from(const json& j, GridSpecConfig g, const std::string& where) {
  Reader r(j, where);
  if (auto* b = r.sub("box")) g.box = box_from(*b, where + ".box");
  r.get("cells", g.cells);
  r.finish();
  if (g.cells.size() != g.box.lo.size()) throw ParameterError(where + ": cells do not match the box dimension");
  for (auto c : g.cells) {
    if (c == 0) throw ParameterError(where + ": zero cells");
  }
  return g;
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["field"] = c.field;
  j["n"] = c.n;
  j["T"] = c.T;
  j["ensemble"] = {{"kind", c.ensemble.kind},
                   {"center", c.ensemble.center},
                   {"width", c.ensemble.width},
                   {"box", box_json(c.ensemble.box)},
                   {"count", c.ensemble.count}};
  j["grid"] = grid_json(c.grid);
  j["kde_grid"] = grid_json(c.kde_grid);
  j["eps_list"] = c.eps_list;
  j["alpha"] = c.alpha;
  j["envelope"] = {{"kind", c.envelope.kind}, {"width", c.envelope.width}};
  j["p0"] = c.p0;
  j["flow"] = {{"dt", c.flow.dt}, {"samples", c.flow.samples}, {"guard", c.flow.guard}, {"min_dist", c.flow.min_dist}};
  const auto& q = c.quantum;
  j["quantum"] = {{"N", q.N},
                  {"L", q.L},
                  {"dt", q.dt},
                  {"per_direction", q.per_direction},
                  {"wigner_stride", q.wigner_stride},
                  {"threshold", q.threshold},
                  {"alias_tol", q.alias_tol},
                  {"husimi_spacing", q.husimi_spacing},
                  {"husimi_p_max", q.husimi_p_max}};
  j["dictionary"] = {{"box", box_json(c.dictionary.box)},
                     {"levels", c.dictionary.levels},
                     {"test_level", c.dictionary.test_level}};
  const auto& t = c.tolerances;
  j["tolerances"] = {{"rlf_slack", t.rlf_slack},
                     {"rlf_residual", t.rlf_residual},
                     {"bandwidth", t.bandwidth},
                     {"regularity_slack", t.regularity_slack},
                     {"decay_threshold", t.decay_threshold},
                     {"decay_max_ratio", t.decay_max_ratio},
                     {"space_eps", t.space_eps},
                     {"wigner_x", t.wigner_x},
                     {"wigner_p", t.wigner_p},
                     {"husimi_min", t.husimi_min},
                     {"husimi_mass", t.husimi_mass},
                     {"marginal", t.marginal},
                     {"oracle_l1", t.oracle_l1},
                     {"oracle_refine", t.oracle_refine},
                     {"uniqueness", t.uniqueness}};
  j["sweeps"] = {{"deltas", c.sweeps.deltas}, {"R", c.sweeps.R}, {"M", c.sweeps.M}};
  j["decay"] = {{"field", c.decay.field}, {"count", c.decay.count},   {"x_min", c.decay.x_min},
                {"x_max", c.decay.x_max}, {"p_abs", c.decay.p_abs},   {"beta", c.decay.beta},
                {"radius", c.decay.radius}, {"L", c.decay.L}};
  const auto& o = c.oracle;
  j["oracle"] = {{"center", o.center},   {"sigma", o.sigma},     {"cells", o.cells},
                 {"dt", o.dt},           {"alt_dt", o.alt_dt},   {"samples", o.samples},
                 {"alt_samples", o.alt_samples}, {"cloud", o.cloud}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "config");
  if (!r.has("experiment")) throw ParameterError("config: missing 'experiment'");
  if (!r.has("seed")) throw ParameterError("config: missing 'seed' (no wall-clock default)");
  r.get("experiment", c.experiment);
  const auto& names = registered_experiments();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end()) {
    throw ParameterError("config: unknown experiment '" + c.experiment + "'");
  }
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("field", c.field);
  r.get("n", c.n);
  r.get("T", c.T);
  if (auto* e = r.sub("ensemble")) {
    Reader s(*e, "ensemble");
    s.get("kind", c.ensemble.kind);
    s.get("center", c.ensemble.center);
    s.get("width", c.ensemble.width);
    if (auto* b = s.sub("box")) c.ensemble.box = box_from(*b, "ensemble.box");
    s.get("count", c.ensemble.count);
    s.finish();
  }
  if (auto* g = r.sub("grid")) c.grid = grid_from(*g, c.grid, "grid");
  if (auto* g = r.sub("kde_grid")) c.kde_grid = grid_from(*g, c.kde_grid, "kde_grid");
  r.get("eps_list", c.eps_list);
  r.get("alpha", c.alpha);
  if (auto* e = r.sub("envelope")) {
    Reader s(*e, "envelope");
    s.get("kind", c.envelope.kind);
    s.get("width", c.envelope.width);
    s.finish();
  }
  r.get("p0", c.p0);
  if (auto* f = r.sub("flow")) {
    Reader s(*f, "flow");
    s.get("dt", c.flow.dt);
    s.get("samples", c.flow.samples);
    s.get("guard", c.flow.guard);
    s.get("min_dist", c.flow.min_dist);
    s.finish();
  }
  if (auto* q = r.sub("quantum")) {
    Reader s(*q, "quantum");
    s.get("N", c.quantum.N);
    s.get("L", c.quantum.L);
    s.get("dt", c.quantum.dt);
    s.get("per_direction", c.quantum.per_direction);
    s.get("wigner_stride", c.quantum.wigner_stride);
    s.get("threshold", c.quantum.threshold);
    s.get("alias_tol", c.quantum.alias_tol);
    s.get("husimi_spacing", c.quantum.husimi_spacing);
    s.get("husimi_p_max", c.quantum.husimi_p_max);
    s.finish();
  }
  if (auto* d = r.sub("dictionary")) {
    Reader s(*d, "dictionary");
    if (auto* b = s.sub("box")) c.dictionary.box = box_from(*b, "dictionary.box");
    s.get("levels", c.dictionary.levels);
    s.get("test_level", c.dictionary.test_level);
    s.finish();
  }
  if (auto* t = r.sub("tolerances")) {
    Reader s(*t, "tolerances");
    auto& x = c.tolerances;
    s.get("rlf_slack", x.rlf_slack);
    s.get("rlf_residual", x.rlf_residual);
    s.get("bandwidth", x.bandwidth);
    s.get("regularity_slack", x.regularity_slack);
    s.get("decay_threshold", x.decay_threshold);
    s.get("decay_max_ratio", x.decay_max_ratio);
    s.get("space_eps", x.space_eps);
    s.get("wigner_x", x.wigner_x);
    s.get("wigner_p", x.wigner_p);
    s.get("husimi_min", x.husimi_min);
    s.get("husimi_mass", x.husimi_mass);
    s.get("marginal", x.marginal);
    s.get("oracle_l1", x.oracle_l1);
    s.get("oracle_refine", x.oracle_refine);
    s.get("uniqueness", x.uniqueness);
    s.finish();
  }
  if (auto* w = r.sub("sweeps")) {
    Reader s(*w, "sweeps");
    s.get("deltas", c.sweeps.deltas);
    s.get("R", c.sweeps.R);
    s.get("M", c.sweeps.M);
    s.finish();
  }
  if (auto* d = r.sub("decay")) {
    Reader s(*d, "decay");
    s.get("field", c.decay.field);
    s.get("count", c.decay.count);
    s.get("x_min", c.decay.x_min);
    s.get("x_max", c.decay.x_max);
    s.get("p_abs", c.decay.p_abs);
    s.get("beta", c.decay.beta);
    s.get("radius", c.decay.radius);
    s.get("L", c.decay.L);
    s.finish();
  }
  if (auto* o = r.sub("oracle")) {
    Reader s(*o, "oracle");
    s.get("center", c.oracle.center);
    s.get("sigma", c.oracle.sigma);
    s.get("cells", c.oracle.cells);
    s.get("dt", c.oracle.dt);
    s.get("alt_dt", c.oracle.alt_dt);
    s.get("samples", c.oracle.samples);
    s.get("alt_samples", c.oracle.alt_samples);
    s.get("cloud", c.oracle.cloud);
    s.finish();
  }
  r.finish();

  // Resolve specs now so that invalid configs fail before any output.
  if (c.n == 0) throw ParameterError("config: n must be positive");
  fields::make_potential(c.field, c.n);
  fields::make_potential(c.decay.field, 1);
  const std::set<std::string> kinds{"weighted_samples", "lattice", "dirac_grid"};
  if (!kinds.count(c.ensemble.kind)) throw ParameterError("ensemble: unknown kind '" + c.ensemble.kind + "'");
  if (c.envelope.kind != "bump" && c.envelope.kind != "gaussian") {
    throw ParameterError("envelope: unknown kind '" + c.envelope.kind + "'");
  }
  if (!(c.T >= 0.0)) throw ParameterError("config: T must be nonnegative");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParameterError("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ============================================================================
// Run records
// ============================================================================

bool RunRecord::pass() const {
  if (stages.empty()) return false;
  for (const auto& s : stages) {
    if (s.status != "ok" || !s.pass) return false;
  }
  return true;
}

const StageReport* RunRecord::stage(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

json to_json(const RunRecord& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"name", s.name}, {"status", s.status}, {"reason", s.reason}, {"pass", s.pass}, {"seconds", s.seconds}, {"data", s.data}});
  }
  return {{"experiment", r.experiment}, {"version", r.version}, {"wall_time", r.wall_time},
          {"pass", r.pass()},           {"config", r.config},   {"stages", stages}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  try {
    r.experiment = j.at("experiment").get<std::string>();
    r.version = j.value("version", "");
    r.wall_time = j.value("wall_time", 0.0);
    r.config = j.value("config", json::object());
    for (const auto& s : j.at("stages")) {
      StageReport st;
      st.name = s.at("name").get<std::string>();
      st.status = s.at("status").get<std::string>();
      st.reason = s.value("reason", "");
      st.pass = s.value("pass", false);
      st.seconds = s.value("seconds", 0.0);
      st.data = s.value("data", json());
      r.stages.push_back(std::move(st));
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("run record: ") + e.what());
  }
  return r;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  std::filesystem::path p = c.output_dir.empty() ? "runs/" + c.experiment : c.output_dir;
  if (p.is_relative()) {
    if (const char* root = std::getenv("RLF_LAB_OUTPUT_ROOT"); root && *root) p = std::filesystem::path(root) / p;
  }
  return p;
}

// ============================================================================
// Pipelines
// ============================================================================

namespace {

// NaN and infinities become null in JSON; keep them visible as strings.
json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

double as_double(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return std::stod(v.get<std::string>());
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> as_doubles(const json& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(as_double(x));
  return v;
}

double gaussian_density(std::span<const double> z, const Vec& center, double width) {
  double r2 = 0.0;
  for (std::size_t a = 0; a < z.size(); ++a) {
    const double d = z[a] - (a < center.size() ? center[a] : 0.0);
    r2 += d * d;
  }
  return std::exp(-r2 / (width * width));
}

flow::StepControl step_control(const FlowSpec& f) {
  flow::StepControl c;
  c.dt = f.dt;
  c.samples = f.samples;
  c.guard = f.guard;
  c.min_dist = f.min_dist;
  return c;
}

quantum::QuantumNumerics numerics(const QuantumSpec& q) {
  quantum::QuantumNumerics n;
  n.N = q.N;
  n.L = q.L;
  n.dt = q.dt;
  n.wigner_stride = q.wigner_stride;
  n.threshold = q.threshold;
  n.alias_tol = q.alias_tol;
  n.husimi.spacing = q.husimi_spacing;
  n.husimi.p_max = q.husimi_p_max;
  return n;
}

quantum::Envelope envelope(const EnvelopeSpec& e) {
  return e.kind == "bump" ? quantum::Envelope::bump(e.width) : quantum::Envelope::gaussian(e.width);
}

measures::ParticleMeasure lattice_cloud(const ExperimentConfig& c, bool gaussian) {
  const auto grid = c.grid.grid();
  measures::ParticleMeasure mu(grid.dim());
  std::vector<double> w(grid.total_cells());
  double total = 0.0;
  for (std::size_t i = 0; i < grid.total_cells(); ++i) {
    w[i] = gaussian ? gaussian_density(grid.cell_center(i), c.ensemble.center, c.ensemble.width) : 1.0;
    total += w[i];
  }
  for (std::size_t i = 0; i < grid.total_cells(); ++i) mu.add(grid.cell_center(i), w[i] / total);
  return mu;
}

quantum::SampleSet phase_samples(const ExperimentConfig& c) {
  if (c.n != 1) throw DimensionError("quantum pipelines are one-dimensional (n = 1)");
  const auto& e = c.ensemble;
  if (e.kind == "weighted_samples") {
    const Vec center = e.center;
    const double width = e.width;
    return quantum::weighted_samples(
        [center, width](std::span<const double> z) { return gaussian_density(z, center, width); }, e.box.box(),
        e.count, c.seed);
  }
  const auto mu = lattice_cloud(c, e.kind == "dirac_grid");
  quantum::SampleSet s;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    s.points.emplace_back(mu.point(i).begin(), mu.point(i).end());
    s.weights.push_back(mu.weight(i));
  }
  return s;
}

json transforms_json(const quantum::TransformSummary& t) {
  return {{"states", t.states},
          {"wigner_states", t.wigner_states},
          {"wigner_failures", t.wigner_failures},
          {"max_norm_drift", num(t.max_norm_drift)},
          {"max_wigner_x_error", num(t.max_wigner_x_error)},
          {"max_wigner_p_error", num(t.max_wigner_p_error)},
          {"max_wigner_imag", num(t.max_wigner_imag)},
          {"min_husimi", num(t.min_husimi)},
          {"max_husimi_mass_error", num(t.max_husimi_mass_error)},
          {"max_boundary_amplitude", num(t.max_boundary_amplitude)},
          {"seconds", num(t.seconds)}};
}

json sweep_json(const quantum::SweepResult& r) {
  json j;
  j["eps"] = nums(r.eps_list);
  j["D"] = nums(r.D);
  j["D_forward"] = nums(r.D_forward);
  j["D_backward"] = nums(r.D_backward);
  json N = json::array(), L = json::array();
  for (const auto& g : r.grids) {
    N.push_back(g.N);
    L.push_back(num(g.L));
  }
  j["N"] = N;
  j["L"] = L;
  j["clamp_radius"] = nums(r.clamp_radii);
  j["times"] = nums(r.times);
  json dist = json::array();
  for (const auto& row : r.cells) {
    std::vector<double> avg(r.times.size(), 0.0);
    for (std::size_t w = 0; w < row.size(); ++w) {
      for (std::size_t k = 0; k < row[w].distances.size() && k < avg.size(); ++k) {
        avg[k] += r.reference.weights[w] * row[w].distances[k];
      }
    }
    dist.push_back(nums(avg));
  }
  j["distance_t"] = dist;
  json failures = json::array();
  for (const auto& row : r.cells) {
    for (const auto& c : row) {
      if (!c.ok) failures.push_back("eps=" + format_double(c.eps) + " sample=" + std::to_string(c.sample) + ": " + c.reason);
    }
  }
  j["failures"] = failures;
  j["warnings"] = r.warnings;
  j["transforms"] = transforms_json(r.transforms);
  return j;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
    if (i > 0 && !(v[i] < v[i - 1])) return false;
  }
  return !v.empty();
}

StageReport trend_stage(const quantum::SweepResult& r, bool require_halving) {
  StageReport s{"trend", "ok", "", false, {}};
  const bool dec = strictly_decreasing(r.D);
  const bool half = !r.D.empty() && r.D.back() < r.D.front() / 2.0;
  s.pass = dec && (!require_halving || half);
  s.data = {{"strictly_decreasing", dec}, {"halved", half}, {"D", nums(r.D)}};
  return s;
}

StageReport transforms_stage(const quantum::SweepResult& r, const Tolerances& tol) {
  StageReport s{"transforms", "ok", "", false, {}};
  const auto& t = r.transforms;
  const bool wx = t.max_wigner_x_error <= tol.wigner_x;
  const bool wp = t.max_wigner_p_error <= tol.wigner_p;
  const bool hm = t.min_husimi >= tol.husimi_min;
  const bool hs = t.max_husimi_mass_error <= tol.husimi_mass;
  s.pass = wx && wp && hm && hs && t.wigner_states > 0 && t.wigner_failures == 0 && r.all_ok();
  s.data = transforms_json(t);
  s.data["checks"] = {{"wigner_x", wx}, {"wigner_p", wp}, {"husimi_min", hm}, {"husimi_mass", hs}};
  s.data["tolerances"] = {{"wigner_x", tol.wigner_x},
                          {"wigner_p", tol.wigner_p},
                          {"husimi_min", tol.husimi_min},
                          {"husimi_mass", tol.husimi_mass}};
  return s;
}

quantum::SemiclassicalConfig semiclassical_config(const ExperimentConfig& c) {
  quantum::SemiclassicalConfig s;
  s.U = fields::make_potential(c.field, 1);
  s.phi0 = envelope(c.envelope);
  s.alpha = c.alpha;
  s.eps_list = c.eps_list;
  s.samples = phase_samples(c);
  s.T = c.T;
  s.per_direction = c.quantum.per_direction;
  s.numerics = numerics(c.quantum);
  s.dict_box = c.dictionary.box.box();
  s.dict_levels = c.dictionary.levels;
  s.flow = step_control(c.flow);
  return s;
}

using StageFn = std::function<StageReport()>;

// Runs a stage, turning exceptions into an error report.
StageReport guarded(const std::string& name, const StageFn& fn) {
  const auto start = std::chrono::steady_clock::now();
  const auto since = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  try {
    StageReport s = fn();
    s.name = name;
    s.seconds = since();
    return s;
  } catch (const std::exception& e) {
    return {name, "error", e.what(), false, {}, since()};
  }
}

StageReport skipped(const std::string& name, const std::string& reason) { return {name, "skipped", reason, false, {}}; }

void run_rlf_check(const ExperimentConfig& c, RunRecord& rec) {
  std::shared_ptr<const fields::PhaseSpaceField> b;
  measures::ParticleMeasure cloud;
  std::optional<flow::FlowMap> F;
  rec.stages.push_back(guarded("flow", [&] {
    b = std::make_shared<const fields::PhaseSpaceField>(fields::make_potential(c.field, c.n), c.field);
    if (c.ensemble.kind == "weighted_samples") {
      const Vec center = c.ensemble.center;
      const double width = c.ensemble.width;
      const auto ens = measures::dirac_ensemble(
          [center, width](std::span<const double> z) { return gaussian_density(z, center, width); },
          c.ensemble.box.box(), c.ensemble.count, c.seed);
      cloud = measures::expectation(ens);
    } else {
      cloud = lattice_cloud(c, c.ensemble.kind == "dirac_grid");
    }
    F = flow::flow_map(b, cloud, c.T, step_control(c.flow));
    StageReport s{"", "ok", "", true, {}};
    s.data = {{"particles", cloud.size()}, {"samples", F->samples()}, {"invalid_fraction", num(F->invalid_fraction())}};
    return s;
  }));
  if (!F) {
    rec.stages.push_back(skipped("rlf", "flow stage failed"));
    return;
  }
  rec.stages.push_back(guarded("rlf", [&] {
    const auto kde = c.kde_grid.grid();
    const double bw = c.tolerances.bandwidth > 0.0 ? c.tolerances.bandwidth : measures::default_bandwidth(cloud);
    const double C = measures::density_estimate(F->slice(0), kde, bw).max_value();
    flow::RlfCheckOptions opts;
    opts.slack = c.tolerances.rlf_slack;
    opts.residual_tol = c.tolerances.rlf_residual;
    opts.seed = c.seed;
    const auto rep = flow::check_rlf(*F, C, kde, bw, opts);
    StageReport s{"", "ok", "", rep.pass, {}};
    json slices = json::array();
    for (const auto& sl : rep.slices) {
      slices.push_back({{"time", num(sl.time)}, {"max_density", num(sl.max_density)}, {"spill", num(sl.spill)}, {"pass", sl.pass}});
    }
    s.data = {{"C", num(C)},
              {"bandwidth", num(bw)},
              {"slack", c.tolerances.rlf_slack},
              {"max_residual", num(rep.max_residual)},
              {"residual_checked", rep.residual_checked},
              {"residual_pass", rep.residual_pass},
              {"invalid_fraction", num(rep.invalid_fraction)},
              {"slices", slices}};
    return s;
  }));
}

void run_oracle(const ExperimentConfig& c, RunRecord& rec) {
  const auto& o = c.oracle;
  rec.stages.push_back(guarded("finite_volume", [&] {
    auto b = std::make_shared<const fields::PhaseSpaceField>(fields::make_potential(c.field, c.n), c.field);
    if (o.cells.empty()) throw ParameterError("oracle: empty cells list");
    json rows = json::array();
    std::vector<double> gaps;
    for (std::size_t m : o.cells) {
      const measures::GridSpec grid(c.grid.box.box(), std::vector<std::size_t>(2 * c.n, m));
      measures::GridDensity w0{grid, std::vector<double>(grid.total_cells()), 0.0};
      measures::ParticleMeasure cloud(grid.dim());
      double mass = 0.0;
      for (std::size_t i = 0; i < grid.total_cells(); ++i) {
        w0.values[i] = gaussian_density(grid.cell_center(i), o.center, std::sqrt(2.0) * o.sigma);
        mass += w0.values[i] * grid.cell_volume();
      }
      for (std::size_t i = 0; i < grid.total_cells(); ++i) {
        w0.values[i] /= mass;
        cloud.add(grid.cell_center(i), w0.values[i] * grid.cell_volume());
      }
      const std::vector<double> times{0.0, c.T};
      const auto fv = weakform::solve_functional_continuity(w0, *b, times);
      flow::StepControl ctrl = step_control(c.flow);
      ctrl.dt = o.dt;
      ctrl.samples = 2;
      const auto F = flow::flow_map(b, cloud, c.T, ctrl);
      const double h = grid.cell_width(0);
      const auto kde = measures::density_estimate(F.slice(F.samples() - 1), grid, h);
      const double gap = weakform::l1_distance(kde, fv.density(1));
      gaps.push_back(gap);
      rows.push_back({{"cells", m}, {"h", num(h)}, {"l1_gap", num(gap)}, {"fv_steps", fv.steps}, {"fv_mass", num(fv.mass(1))}});
    }
    const bool small = gaps.front() <= c.tolerances.oracle_l1;
    const bool shrinks = gaps.size() < 2 || gaps[gaps.size() - 2] / gaps.back() >= c.tolerances.oracle_refine;
    StageReport s{"", "ok", "", small && shrinks, {}};
    s.data = {{"rows", rows}, {"tolerance", c.tolerances.oracle_l1}, {"refine", c.tolerances.oracle_refine},
              {"small", small}, {"shrinks", shrinks}};
    return s;
  }));
  rec.stages.push_back(guarded("uniqueness", [&] {
    auto b = std::make_shared<const fields::PhaseSpaceField>(fields::make_potential(c.field, c.n), c.field);
    const Vec center = o.center;
    const double width = std::sqrt(2.0) * o.sigma;
    const auto ens = measures::dirac_ensemble(
        [center, width](std::span<const double> z) { return gaussian_density(z, center, width); },
        c.grid.box.box(), o.cloud, c.seed);
    auto mu = measures::expectation(ens);
    mu = mu.scaled(1.0 / mu.total_mass());
    flow::StepControl a = step_control(c.flow), bb = step_control(c.flow);
    a.dt = o.dt;
    a.samples = o.samples;
    bb.dt = o.alt_dt;
    bb.samples = o.alt_samples;
    const auto Fa = flow::flow_map(b, mu, c.T, a);
    const auto Fb = flow::flow_map(b, mu, c.T, bb);
    const auto ca = flow::superpose(Fa, mu.weights());
    const auto cb = flow::superpose(Fb, mu.weights());
    // Shared sample times of the two grids.
    std::vector<double> shared;
    for (double t : cb.times) {
      for (double u : ca.times) {
        if (std::abs(t - u) <= 1e-12) {
          shared.push_back(u);
          break;
        }
      }
    }
    std::vector<double> shared_b;
    for (double t : cb.times) {
      for (double u : shared) {
        if (std::abs(t - u) <= 1e-12) shared_b.push_back(t);
      }
    }
    const auto ra = weakform::restrict_to_times(ca, shared);
    const auto rb = weakform::restrict_to_times(cb, shared_b);
    const auto dict = measures::default_dictionary(c.dictionary.box.box(), c.dictionary.levels);
    const double d = weakform::sup_weak_distance(ra, rb, dict);
    StageReport s{"", "ok", "", shared.size() >= 2 && d <= c.tolerances.uniqueness, {}};
    s.data = {{"sup_distance", num(d)}, {"shared_times", shared.size()}, {"tolerance", c.tolerances.uniqueness}};
    return s;
  }));
}

void run_semiclassical(const ExperimentConfig& c, RunRecord& rec, quantum::SweepResult* keep) {
  std::optional<quantum::SweepResult> res;
  rec.stages.push_back(guarded("sweep", [&] {
    res = quantum::semiclassical_experiment(semiclassical_config(c));
    StageReport s{"", "ok", "", res->all_ok(), sweep_json(*res)};
    return s;
  }));
  if (!res) {
    rec.stages.push_back(skipped("trend", "sweep stage failed"));
    rec.stages.push_back(skipped("transforms", "sweep stage failed"));
    return;
  }
  rec.stages.push_back(guarded("trend", [&] { return trend_stage(*res, true); }));
  rec.stages.push_back(guarded("transforms", [&] { return transforms_stage(*res, c.tolerances); }));
  if (keep) *keep = std::move(*res);
}

void run_stability(const ExperimentConfig& c, RunRecord& rec) {
  quantum::SweepResult main;
  run_semiclassical(c, rec, &main);
  if (!rec.stage("sweep") || rec.stage("sweep")->status != "ok") {
    rec.stages.push_back(skipped("decay_sweep", "sweep stage failed"));
    rec.stages.push_back(skipped("hypotheses", "sweep stage failed"));
    return;
  }
  std::optional<quantum::SweepResult> decay;
  fields::Potential coulomb;
  rec.stages.push_back(guarded("decay_sweep", [&] {
    auto cfg = semiclassical_config(c);
    coulomb = fields::make_potential(c.decay.field, 1);
    if (!coulomb.has_coulomb()) throw ParameterError("decay: field must contain a coulomb term");
    cfg.U = coulomb;
    cfg.numerics.L = c.decay.L;
    quantum::SampleSet s;
    const auto& d = c.decay;
    for (std::size_t i = 0; i < d.count; ++i) {
      const double f = d.count > 1 ? static_cast<double>(i) / static_cast<double>(d.count - 1) : 0.0;
      s.points.push_back({d.x_min + f * (d.x_max - d.x_min), (i % 2 == 0 ? 1.0 : -1.0) * d.p_abs});
      s.weights.push_back(1.0 / static_cast<double>(d.count));
    }
    for (const auto& z : s.points) {
      if (coulomb.singular.distance(std::span<const double>(z.data(), 1)) < d.x_min - 1e-12) {
        throw ParameterError("decay: samples must keep dist(x0, S) >= x_min");
      }
    }
    cfg.samples = std::move(s);
    decay = quantum::semiclassical_experiment(cfg);
    return StageReport{"", "ok", "", decay->all_ok(), sweep_json(*decay)};
  }));
  if (!decay) {
    rec.stages.push_back(skipped("decay_transforms", "decay sweep failed"));
    rec.stages.push_back(skipped("hypotheses", "decay sweep failed"));
    return;
  }
  rec.stages.push_back(guarded("decay_transforms", [&] { return transforms_stage(*decay, c.tolerances); }));
  rec.stages.push_back(guarded("hypotheses", [&] {
    quantum::HypothesisConfig h;
    h.regularity_slack = c.tolerances.regularity_slack;
    h.beta = c.decay.beta;
    h.deltas = c.sweeps.deltas;
    h.decay_radius = c.decay.radius;
    h.decay_threshold = c.tolerances.decay_threshold;
    h.decay_max_ratio = c.tolerances.decay_max_ratio;
    h.space_eps = c.tolerances.space_eps;
    h.R_list = c.sweeps.R;
    h.M_list = c.sweeps.M;
    h.test_level = c.dictionary.test_level;
    const fields::PhaseSpaceField b(fields::make_potential(c.field, 1), c.field);
    const auto dict = measures::default_dictionary(c.dictionary.box.box(), c.dictionary.levels);
    const auto rep = quantum::hypothesis_statistics(main, b, *decay, coulomb.singular, c.dictionary.box.box(), dict, h);
    StageReport s{"", "ok", "", rep.pass(), {}};
    json reg = json::array(), space = json::array(), time = json::array();
    for (const auto& r : rep.regularity) reg.push_back(weakform::to_json(r));
    for (const auto& r : rep.space_tightness) space.push_back(weakform::to_json(r));
    for (const auto& r : rep.time_tightness) time.push_back(weakform::to_json(r));
    s.data = {{"eps", nums(c.eps_list)},
              {"C", num(rep.C)},
              {"regularity", reg},
              {"decay", weakform::to_json(rep.decay)},
              {"space_tightness", space},
              {"time_tightness", time},
              {"limit_continuity", weakform::to_json(rep.limit_continuity)},
              {"limit_baseline", num(rep.limit_baseline)},
              {"gaps", nums(rep.gaps)},
              {"pass", {{"regularity", rep.regularity_pass},
                        {"decay", rep.decay_pass},
                        {"space_tightness", rep.space_pass},
                        {"time_tightness", rep.time_pass},
                        {"limit_continuity", rep.limit_pass}}}};
    return s;
  }));
}

void run_alpha1(const ExperimentConfig& c, RunRecord& rec) {
  std::optional<quantum::Alpha1Result> res;
  rec.stages.push_back(guarded("sweep", [&] {
    if (c.n != 1) throw DimensionError("alpha1 is one-dimensional (n = 1)");
    if (c.grid.box.lo.size() != 1) throw DimensionError("alpha1: grid must be the one-dimensional x grid");
    quantum::Alpha1Config a;
    a.U = fields::make_potential(c.field, 1);
    a.phi0 = envelope(c.envelope);
    a.eps_list = c.eps_list;
    a.x_grid = c.grid.grid();
    const double x0 = c.ensemble.center.empty() ? 0.0 : c.ensemble.center[0];
    const double width = c.ensemble.width;
    a.rho = [x0, width](std::span<const double> x) { return std::exp(-(x[0] - x0) * (x[0] - x0) / (width * width)); };
    a.p0 = c.p0;
    a.T = c.T;
    a.per_direction = c.quantum.per_direction;
    a.numerics = numerics(c.quantum);
    a.dict_box = c.dictionary.box.box();
    a.dict_levels = c.dictionary.levels;
    a.flow = step_control(c.flow);
    res = quantum::alpha1_experiment(a);
    StageReport s{"", "ok", "", res->sweep.all_ok(), sweep_json(res->sweep)};
    s.data["warnings"] = res->warnings;
    return s;
  }));
  if (!res) {
    for (const char* n : {"marginal", "trend", "transforms"}) rec.stages.push_back(skipped(n, "sweep stage failed"));
    return;
  }
  rec.stages.push_back(guarded("marginal", [&] {
    const double last = res->marginal_distance.back();
    StageReport s{"", "ok", "", std::isfinite(last) && last <= c.tolerances.marginal, {}};
    s.data = {{"eps", nums(c.eps_list)},
              {"marginal_distance", nums(res->marginal_distance)},
              {"x_variance", nums(res->x_variance)},
              {"tolerance", c.tolerances.marginal}};
    return s;
  }));
  rec.stages.push_back(guarded("trend", [&] { return trend_stage(res->sweep, false); }));
  rec.stages.push_back(guarded("transforms", [&] { return transforms_stage(res->sweep, c.tolerances); }));
}

}  // namespace

RunRecord execute(const ExperimentConfig& config) {
  const auto& names = registered_experiments();
  if (std::find(names.begin(), names.end(), config.experiment) == names.end()) {
    throw ParameterError("unknown experiment '" + config.experiment + "'");
  }
  RunRecord rec;
  rec.experiment = config.experiment;
  rec.config = to_json(config);
  rec.version = version_stamp();
  const auto t0 = std::chrono::steady_clock::now();
  if (config.experiment == "rlf-check") {
    run_rlf_check(config, rec);
  } else if (config.experiment == "oracle-consistency") {
    run_oracle(config, rec);
  } else if (config.experiment == "semiclassical") {
    run_semiclassical(config, rec, nullptr);
  } else if (config.experiment == "stability-hypotheses") {
    run_stability(config, rec);
  } else {
    run_alpha1(config, rec);
  }
  rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

RunRecord run_experiment(const ExperimentConfig& config) {
  // Validate through a serialization round trip before touching the disk.
  const auto resolved = config_from_json(to_json(config));
  const auto dir = resolve_output_dir(resolved);
  RunRecord rec = execute(resolved);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    out << to_json(resolved).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "record.json");
    out << to_json(rec).dump(2) << '\n';
  }
  emit_plotdata(rec, dir / "plots");
  return rec;
}

// ============================================================================
// Plot data
// ============================================================================

namespace {

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<std::string>& cells) { rows_.push_back(cells); }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    auto line = [&](const std::vector<std::string>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
      out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string f(const json& v) { return format_double(as_double(v)); }
std::string f(double v) { return format_double(v); }
std::string b(bool v) { return v ? "1" : "0"; }

struct Emitter {
  std::filesystem::path dir;
  std::vector<std::string> files;
  std::vector<std::pair<std::string, std::string>> readme;  // file, description

  void add(const std::string& name, const Csv& csv, const std::string& what) {
    csv.write(dir / name);
    files.push_back(name);
    readme.emplace_back(name, what);
  }
};

const StageReport* usable(const RunRecord& r, const std::string& name) {
  const auto* s = r.stage(name);
  return s && s->status == "ok" && !s->data.is_null() ? s : nullptr;
}

void emit_sweep(const StageReport& s, Emitter& e) {
  const auto& d = s.data;
  const auto eps = as_doubles(d.at("eps"));
  const auto D = as_doubles(d.at("D"));
  const auto Df = as_doubles(d.at("D_forward"));
  const auto Db = as_doubles(d.at("D_backward"));
  Csv csv({"eps", "D", "D_forward", "D_backward", "log10_eps", "log10_D"});
  for (std::size_t i = 0; i < eps.size(); ++i) {
    csv.row({f(eps[i]), f(D[i]), f(Df[i]), f(Db[i]), f(std::log10(eps[i])), f(std::log10(D[i]))});
  }
  e.add("D_vs_eps.csv", csv,
        "Distance between Husimi measures and the classical flow of measures, sup over [-T, T] and "
        "averaged over the samples, against eps (log-log columns included). Expected to decrease to 0.");
  Csv t({"eps", "t", "distance"});
  const auto times = as_doubles(d.at("times"));
  const auto& rows = d.at("distance_t");
  for (std::size_t i = 0; i < eps.size() && i < rows.size(); ++i) {
    const auto v = as_doubles(rows[i]);
    for (std::size_t k = 0; k < times.size() && k < v.size(); ++k) t.row({f(eps[i]), f(times[k]), f(v[k])});
  }
  e.add("distance_vs_t.csv", t, "Sample-averaged distance at each time of the sweep grid, per eps.");
}

void emit_transforms(const StageReport& s, Emitter& e) {
  Csv csv({"quantity", "value", "tolerance", "pass"});
  const auto& d = s.data;
  const auto& tol = d.at("tolerances");
  const auto& chk = d.at("checks");
  csv.row({"wigner_x_marginal_error", f(d.at("max_wigner_x_error")), f(tol.at("wigner_x")), b(chk.at("wigner_x"))});
  csv.row({"wigner_p_marginal_error", f(d.at("max_wigner_p_error")), f(tol.at("wigner_p")), b(chk.at("wigner_p"))});
  csv.row({"husimi_min", f(d.at("min_husimi")), f(tol.at("husimi_min")), b(chk.at("husimi_min"))});
  csv.row({"husimi_mass_error", f(d.at("max_husimi_mass_error")), f(tol.at("husimi_mass")), b(chk.at("husimi_mass"))});
  e.add("transform_checks.csv", csv, "Wigner marginal identities and Husimi positivity/mass over all checked states.");
}

void emit_hypotheses(const StageReport& s, Emitter& e) {
  const auto& d = s.data;
  const auto eps = as_doubles(d.at("eps"));
  Csv reg({"eps", "value", "bound", "pass"});
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto& r = d.at("regularity").at(i);
    reg.row({f(eps[i]), f(r.at("value")), f(r.at("C")), b(r.at("pass").get<bool>())});
  }
  e.add("hyp_regularity.csv", reg,
        "Uniform regularity: largest averaged density ratio against the constant of the classical family.");
  Csv dec({"delta", "eps", "value"});
  const auto& ds = d.at("decay");
  const auto deltas = as_doubles(ds.at("deltas"));
  for (std::size_t a = 0; a < deltas.size(); ++a) {
    const auto v = as_doubles(ds.at("values").at(a));
    for (std::size_t i = 0; i < v.size() && i < eps.size(); ++i) dec.row({f(deltas[a]), f(eps[i]), f(v[i])});
  }
  e.add("hyp_decay.csv", dec, "Decay integrand near the Coulomb singularity, averaged, per delta and eps.");
  auto sweep = [&](const char* key, const char* param, const std::string& name, const std::string& what) {
    Csv csv({"eps", param, "fraction"});
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const auto& st = d.at(key).at(i);
      const auto sw = as_doubles(st.at("sweep"));
      const auto fr = as_doubles(st.at("fractions"));
      for (std::size_t k = 0; k < sw.size(); ++k) csv.row({f(eps[i]), f(sw[k]), f(fr[k])});
    }
    e.add(name, csv, what);
  };
  sweep("space_tightness", "R", "hyp_space_tightness.csv", "Fraction of samples with mass escaping B_R, per R.");
  sweep("time_tightness", "M", "hyp_time_tightness.csv", "Fraction of samples with time variation above M, per M.");
  Csv lim({"eps", "value", "floor"});
  const auto& lc = d.at("limit_continuity");
  const auto vals = as_doubles(lc.at("values"));
  for (std::size_t i = 0; i < vals.size() && i < eps.size(); ++i) lim.row({f(eps[i]), f(vals[i]), f(lc.at("floor"))});
  e.add("hyp_limit_continuity.csv", lim, "Weak-form residual of the Husimi curves against the field, per eps.");
  Csv gap({"eps", "gap"});
  const auto gaps = as_doubles(d.at("gaps"));
  for (std::size_t i = 0; i < gaps.size() && i < eps.size(); ++i) gap.row({f(eps[i]), f(gaps[i])});
  e.add("stability_gap.csv", gap, "Stability gap between each Husimi family and the classical family.");
}

}  // namespace

std::vector<std::string> emit_plotdata(const RunRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Emitter e{dir, {}, {}};
  json gaps = json::array();
  for (const auto& s : record.stages) {
    if (s.status != "ok") gaps.push_back({{"stage", s.name}, {"status", s.status}, {"reason", s.reason}});
  }
  auto attempt = [&](const std::string& stage, const std::function<void(const StageReport&)>& fn) {
    if (const auto* s = usable(record, stage)) {
      try {
        fn(*s);
      } catch (const std::exception& ex) {
        gaps.push_back({{"stage", stage}, {"status", "emit_error"}, {"reason", ex.what()}});
      }
    }
  };
  const auto& x = record.experiment;
  if (x == "semiclassical" || x == "alpha1" || x == "stability-hypotheses") {
    attempt("sweep", [&](const StageReport& s) { emit_sweep(s, e); });
    attempt("transforms", [&](const StageReport& s) { emit_transforms(s, e); });
  }
  if (x == "alpha1") {
    attempt("marginal", [&](const StageReport& s) {
      Csv csv({"eps", "marginal_distance", "x_variance"});
      const auto eps = as_doubles(s.data.at("eps"));
      const auto md = as_doubles(s.data.at("marginal_distance"));
      const auto xv = as_doubles(s.data.at("x_variance"));
      for (std::size_t i = 0; i < eps.size(); ++i) csv.row({f(eps[i]), f(md[i]), f(xv[i])});
      e.add("alpha1_marginal.csv", csv,
            "t = 0 Husimi momentum marginal against the discretized |hat phi0|^2(. - p0), and the x-variance.");
    });
  }
  if (x == "stability-hypotheses") attempt("hypotheses", [&](const StageReport& s) { emit_hypotheses(s, e); });
  if (x == "rlf-check") {
    attempt("rlf", [&](const StageReport& s) {
      Csv csv({"time", "max_density", "bound", "spill", "pass"});
      const double bound = as_double(s.data.at("C")) * (1.0 + as_double(s.data.at("slack")));
      for (const auto& sl : s.data.at("slices")) {
        csv.row({f(sl.at("time")), f(sl.at("max_density")), f(bound), f(sl.at("spill")), b(sl.at("pass").get<bool>())});
      }
      e.add("density_bound.csv", csv, "Density-bound profile: KDE sup density of the flowed cloud against C(1 + slack).");
    });
  }
  if (x == "oracle-consistency") {
    attempt("finite_volume", [&](const StageReport& s) {
      Csv csv({"cells", "h", "l1_gap"});
      for (const auto& r : s.data.at("rows")) csv.row({std::to_string(r.at("cells").get<std::size_t>()), f(r.at("h")), f(r.at("l1_gap"))});
      e.add("oracle_finite_volume.csv", csv, "L1 gap between particle superposition and upwind finite volumes, per grid.");
    });
    attempt("uniqueness", [&](const StageReport& s) {
      Csv csv({"quantity", "value", "tolerance"});
      csv.row({"sup_weak_distance", f(s.data.at("sup_distance")), f(s.data.at("tolerance"))});
      e.add("oracle_uniqueness.csv", csv, "sup_t weak distance between two independently configured flow constructions.");
    });
  }

  if (!e.files.empty()) {
    std::ofstream out(dir / "README.md");
    out << "# Plot data: " << record.experiment << "\n\n";
    out << "| file | content |\n|---|---|\n";
    for (const auto& [name, what] : e.readme) out << "| " << name << " | " << what << " |\n";
    e.files.push_back("README.md");
  }
  json manifest = {{"experiment", record.experiment}, {"files", e.files}, {"gaps", gaps}};
  if (record.stages.empty()) manifest["gaps"].push_back({{"stage", "*"}, {"status", "empty"}, {"reason", "record has no stages"}});
  {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  e.files.push_back("manifest.json");
  return e.files;
}

}  // namespace rlf::harness
