// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"
#include "rlf/fields.hpp"
#include "rlf/flow.hpp"
#include "rlf/harness.hpp"
#include "rlf/measures.hpp"
#include "rlf/quantum.hpp"
#include "rlf/weakform.hpp"

using namespace rlf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = -1.0;  // charged runtime, < 0: measured around the body
};

int failures = 0;
std::string report;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

void criterion(int id, const std::string& title, double limit, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double t = o.seconds >= 0.0 ? o.seconds : wall;
  const bool ok = o.pass && t < limit;
  if (!ok) ++failures;
  char line[1024];
  std::snprintf(line, sizeof line, "[%s] %2d %s: %s; runtime %.1f s (limit %.0f s)\n", ok ? "PASS" : "FAIL", id,
                title.c_str(), o.detail.c_str(), t, limit);
  report += line;
  std::fputs(line, stdout);
  std::fflush(stdout);
}

fs::path work_root() {
  const auto d = fs::temp_directory_path() / "rlf_acceptance";
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

harness::RunRecord run_config(const std::string& name, const fs::path& out) {
  auto cfg = harness::load_config(fs::path(RLF_CONFIG_DIR) / name);
  cfg.output_dir = out.string();
  return harness::run_experiment(cfg);
}

const harness::StageReport& stage(const harness::RunRecord& r, const std::string& name) {
  const auto* s = r.stage(name);
  if (!s) throw Error("record of " + r.experiment + " has no stage " + name);
  return *s;
}

double num(const json& v) { return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN(); }

std::vector<double> nums(const json& a) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(num(x));
  return v;
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

std::shared_ptr<const fields::PhaseSpaceField> field(const std::string& spec) {
  return std::make_shared<const fields::PhaseSpaceField>(fields::make_field(spec));
}

double relative_drift(const fields::PhaseSpaceField& b, const flow::Trajectory& tr) {
  const double E0 = b.energy(tr.state(0));
  double d = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) d = std::max(d, std::abs(b.energy(tr.state(k)) - E0));
  return d / std::abs(E0);
}

struct TransformTally {
  bool pass = true;
  double wx = 0.0, wp = 0.0, hmin = kInf, hmass = 0.0, seconds = 0.0;
  std::size_t states = 0, wigner_states = 0;

  void add(const harness::StageReport& s) {
    if (s.status != "ok") {
      pass = false;
      return;
    }
    pass = pass && s.pass;
    const auto& d = s.data;
    wx = std::max(wx, num(d.at("max_wigner_x_error")));
    wp = std::max(wp, num(d.at("max_wigner_p_error")));
    hmin = std::min(hmin, num(d.at("min_husimi")));
    hmass = std::max(hmass, num(d.at("max_husimi_mass_error")));
    seconds += num(d.at("seconds"));
    states += d.at("states").get<std::size_t>();
    wigner_states += d.at("wigner_states").get<std::size_t>();
  }
  std::string detail() const {
    return "wigner x " + fmt(wx) + ", p " + fmt(wp) + "; husimi min " + fmt(hmin) + ", mass " + fmt(hmass) + " over " +
           std::to_string(states) + " states (" + std::to_string(wigner_states) + " Wigner)";
  }
};

}  // namespace

int main() {
  const auto root = work_root();
  std::printf("acceptance: artifacts under %s\n", root.string().c_str());

  criterion(1, "free-flow exactness", 1.0, [] {
    const auto b = fields::make_field("free");
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    double err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double z0[2] = {u(rng), u(rng)};
      const auto tr = flow::integrate_trajectory(b, z0, 1.0, flow::StepControl{});
      const auto z = tr.state(tr.size() - 1);
      err = std::max({err, std::abs(z[0] - (z0[0] + z0[1])), std::abs(z[1] - z0[1])});
    }
    return Outcome{err <= 1e-12, "max error " + fmt(err) + " over 100 points"};
  });

  criterion(2, "Hamiltonian conservation", 10.0, [] {
    flow::StepControl c;
    c.dt = 1e-3;
    const auto h = fields::make_field("harmonic(omega=1)");
    const double zh[2] = {1.0, 0.5};
    const double dh = relative_drift(h, flow::integrate_trajectory(h, zh, 10.0, c));
    const auto k = fields::make_field("coulomb(k=1)");
    double dk = 0.0, dmin = kInf;
    for (const auto& z : std::vector<std::array<double, 2>>{{1.0, -0.5}, {-2.0, 1.0}, {0.8, 0.3}, {3.0, -1.5}}) {
      const auto tr = flow::integrate_trajectory(k, z, 10.0, c);
      dk = std::max(dk, relative_drift(k, tr));
      dmin = std::min(dmin, tr.min_singular_dist);
    }
    return Outcome{dh <= 1e-8 && dk <= 1e-6 && dmin >= 0.5,
                   "harmonic " + fmt(dh) + ", Coulomb " + fmt(dk) + " (min dist to S " + fmt(dmin) + ")"};
  });

  criterion(3, "RLF compression bound", 30.0, [&] {
    const auto rec = run_config("rlf_check.json", root / "rlf-check");
    const auto& s = stage(rec, "rlf");
    double worst = 0.0;
    for (const auto& sl : s.data.at("slices")) worst = std::max(worst, num(sl.at("max_density")));
    const double C = num(s.data.at("C"));
    return Outcome{rec.pass(),
                   std::to_string(s.data.at("slices").size()) + " slices, max density " + fmt(worst) + " vs C " +
                       fmt(C) + " (+" + fmt(100 * num(s.data.at("slack"))) + "%)",
                   stage(rec, "flow").seconds + s.seconds};
  });

  harness::RunRecord oracle;
  criterion(4, "particles vs finite volumes", 60.0, [&] {
    oracle = run_config("oracle_consistency.json", root / "oracle-consistency");
    const auto& s = stage(oracle, "finite_volume");
    std::vector<double> gaps;
    for (const auto& r : s.data.at("rows")) gaps.push_back(num(r.at("l1_gap")));
    return Outcome{s.pass, "L1 gaps " + list(gaps) + ", ratio " + fmt(gaps.front() / gaps.back()), s.seconds};
  });

  criterion(5, "weak residual order", 30.0, [] {
    auto b = field("harmonic(omega=1)");
    measures::ParticleMeasure mu(2);
    const int m = 24;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        const double z[2] = {0.5 - 1.0 + (i + 0.5) * 2.0 / m, -1.0 + (j + 0.5) * 2.0 / m};
        mu.add(z, std::exp(-(z[0] - 0.5) * (z[0] - 0.5) - z[1] * z[1]));
      }
    }
    const auto phi = measures::bump_function({0.6, 0.3}, {1.2, 1.2});
    std::vector<double> r;
    for (std::size_t samples : {33, 65, 129}) {
      flow::StepControl c;
      c.dt = 1e-3;
      c.samples = samples;
      const auto curve = flow::superpose(flow::flow_map(b, mu, 1.0, c), mu);
      r.push_back(weakform::weak_residual(curve, *b, phi, {0.0, 1.0}));
    }
    const double q1 = r[0] / r[1], q2 = r[1] / r[2];
    return Outcome{q1 >= 3.0 && q2 >= 3.0, "residuals " + list(r) + ", ratios " + fmt(q1) + ", " + fmt(q2)};
  });

  criterion(6, "uniqueness surrogate", 60.0, [&] {
    const auto& s = stage(oracle, "uniqueness");
    return Outcome{s.pass, "sup_t weak distance " + fmt(num(s.data.at("sup_distance"))), s.seconds};
  });

  criterion(7, "quantum solver oracle", 60.0, [] {
    using namespace quantum;
    const Grid1D g{8.0, 4096};
    const GaussianPacket free{0.5, 1.0, 1.0, 0.1, 0.0, 0.0};
    const auto psi = propagate(free.sample(g, 0.0), fields::make_potential("free"), {0.0, 1.0}, 1e-2).back();
    const double err = l2_distance(psi, free.sample(g, 1.0));
    // Splitting is exact for U = 0; the order is measured on the harmonic packet.
    const GaussianPacket osc{0.5, 1.0, 0.7, 0.1, 1.0, 0.0};
    const auto U = fields::make_potential("harmonic(omega=1)");
    std::vector<double> e;
    for (double dt : {0.1, 0.05, 0.025}) {
      e.push_back(l2_distance(evolve(osc.sample(g, 0.0), U, dt, static_cast<std::size_t>(std::llround(1.0 / dt))),
                              osc.sample(g, 1.0)));
    }
    const double q1 = e[0] / e[1], q2 = e[1] / e[2];
    return Outcome{err <= 1e-6 && q1 >= 3.5 && q2 >= 3.5,
                   "free L2 error " + fmt(err) + "; harmonic Strang ratios " + fmt(q1) + ", " + fmt(q2)};
  });

  // Sweep runs shared by criteria 8 to 12.
  const auto semi_dir = root / "semiclassical", rerun_dir = root / "semiclassical-rerun";
  harness::RunRecord semi, stab, alpha;
  std::string semi_error, stab_error, alpha_error;
  try {
    semi = run_config("semiclassical.json", semi_dir);
  } catch (const std::exception& e) {
    semi_error = e.what();
  }
  try {
    stab = run_config("stability_hypotheses.json", root / "stability-hypotheses");
  } catch (const std::exception& e) {
    stab_error = e.what();
  }
  try {
    alpha = run_config("alpha1.json", root / "alpha1");
  } catch (const std::exception& e) {
    alpha_error = e.what();
  }

  criterion(8, "transform identities", 60.0, [&] {
    if (!semi_error.empty() || !stab_error.empty() || !alpha_error.empty()) {
      return Outcome{false, semi_error + stab_error + alpha_error};
    }
    // Charged: the checks of the criterion 9 sweep; the other sweeps are
    // verified with the same tolerances.
    TransformTally main, all;
    main.add(stage(semi, "transforms"));
    all.add(stage(semi, "transforms"));
    all.add(stage(stab, "transforms"));
    all.add(stage(stab, "decay_transforms"));
    all.add(stage(alpha, "transforms"));
    return Outcome{main.pass && all.pass, all.detail(), main.seconds};
  });

  criterion(9, "semiclassical trend", 600.0, [&] {
    if (!semi_error.empty()) return Outcome{false, semi_error};
    const auto& sw = stage(semi, "sweep");
    const auto& tr = stage(semi, "trend");
    const auto eps = nums(sw.data.at("eps"));
    const auto D = nums(sw.data.at("D"));
    bool ok = sw.status == "ok" && tr.pass;
    std::string detail = "D " + list(D);
    const fs::path base = fs::path(RLF_DATA_DIR) / "semiclassical_baseline.json";
    if (fs::exists(base)) {
      std::ifstream in(base);
      const auto j = json::parse(in);
      const auto ref = nums(j.at("D"));
      double worst = 0.0;
      bool same = ref.size() == D.size() && nums(j.at("eps")) == eps;
      for (std::size_t i = 0; same && i < D.size(); ++i) worst = std::max(worst, std::abs(D[i] / ref[i] - 1.0));
      ok = ok && same && worst <= 0.05;
      detail += ", baseline deviation " + fmt(100 * worst) + "%";
    } else {
      fs::create_directories(base.parent_path());
      std::ofstream(base) << json{{"eps", eps}, {"D", D}}.dump(2) << '\n';
      detail += ", baseline recorded";
    }
    return Outcome{ok, detail, sw.seconds + tr.seconds};
  });

  criterion(10, "stability hypotheses", 900.0, [&] {
    if (!stab_error.empty()) return Outcome{false, stab_error};
    const auto& h = stage(stab, "hypotheses");
    std::string detail;
    if (h.status == "ok") {
      for (const auto& [k, v] : h.data.at("pass").items()) detail += k + "=" + (v.get<bool>() ? "ok" : "fail") + " ";
      detail += "decay stability " + fmt(num(h.data.at("decay").at("stability")));
    } else {
      detail = h.reason;
    }
    double t = 0.0;
    for (const auto& s : stab.stages) t += s.seconds;
    return Outcome{stab.pass(), detail, t};
  });

  criterion(11, "alpha = 1 display", 600.0, [&] {
    if (!alpha_error.empty()) return Outcome{false, alpha_error};
    const auto& m = stage(alpha, "marginal");
    const auto& tr = stage(alpha, "trend");
    const auto D = nums(stage(alpha, "sweep").data.at("D"));
    const auto md = nums(m.data.at("marginal_distance"));
    double t = 0.0;
    for (const auto& s : alpha.stages) t += s.seconds;
    return Outcome{m.pass && tr.pass, "p-marginal distance at eps=0.05 " + fmt(md.back()) + ", free D " + list(D), t};
  });

  criterion(12, "determinism", 600.0, [&] {
    if (!semi_error.empty()) return Outcome{false, semi_error};
    const auto start = std::chrono::steady_clock::now();
    run_config("semiclassical.json", rerun_dir);
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto a = csv_files(semi_dir / "plots"), b = csv_files(rerun_dir / "plots");
    std::string diff;
    for (const auto& [name, content] : a) {
      const auto it = b.find(name);
      if (it == b.end() || it->second != content) diff += " " + name;
    }
    if (a.size() != b.size()) diff += " (file sets differ)";
    return Outcome{!a.empty() && diff.empty(),
                   std::to_string(a.size()) + " CSVs compared" + (diff.empty() ? ", identical" : ", differing:" + diff), t};
  });

  std::printf("acceptance: %d of 12 criteria failed\n", failures);
  // ctest hides the output of passing tests; keep a copy next to the binary.
  std::ofstream("acceptance_report.txt") << report << "acceptance: " << failures << " of 12 criteria failed\n";
  return failures == 0 ? 0 : 1;
}
