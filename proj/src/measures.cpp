#include "rlf/measures.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

namespace rlf::measures {

// ============================================================================
// ParticleMeasure
// ============================================================================

ParticleMeasure::ParticleMeasure(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw DimensionError("ParticleMeasure: dimension must be positive");
}

ParticleMeasure::ParticleMeasure(std::size_t dim, std::vector<double> coords,
                                 std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim == 0) throw DimensionError("ParticleMeasure: dimension must be positive");
  if (coords_.size() != weights_.size() * dim_) {
    throw DimensionError("ParticleMeasure: coordinate array does not match weights x dim");
  }
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
      throw ParameterError("ParticleMeasure: weight " + std::to_string(i) +
                           " is negative or non-finite");
    }
  }
}

ParticleMeasure ParticleMeasure::dirac(std::span<const double> x, double weight) {
  ParticleMeasure mu(x.size());
  mu.add(x, weight);
  return mu;
}

double ParticleMeasure::total_mass() const {
  double s = 0.0;
  for (double w : weights_) s += w;
  return s;
}

bool ParticleMeasure::is_probability(double tol) const {
  return std::abs(total_mass() - 1.0) <= tol;
}

void ParticleMeasure::add(std::span<const double> x, double weight) {
  if (x.size() != dim_) throw DimensionError("ParticleMeasure::add: point has wrong dimension");
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw ParameterError("ParticleMeasure::add: weight must be finite and nonnegative");
  }
  coords_.insert(coords_.end(), x.begin(), x.end());
  weights_.push_back(weight);
}

ParticleMeasure ParticleMeasure::scaled(double factor) const {
  if (!(factor >= 0.0)) throw ParameterError("ParticleMeasure::scaled: negative factor");
  std::vector<double> w(weights_);
  for (double& v : w) v *= factor;
  return ParticleMeasure(dim_, coords_, std::move(w));
}

ParticleMeasure combine(double a, const ParticleMeasure& mu, double b, const ParticleMeasure& nu) {
  if (mu.dim() != nu.dim()) throw DimensionError("combine: dimension mismatch");
  ParticleMeasure out(mu.dim());
  for (std::size_t i = 0; i < mu.size(); ++i) out.add(mu.point(i), a * mu.weight(i));
  for (std::size_t i = 0; i < nu.size(); ++i) out.add(nu.point(i), b * nu.weight(i));
  return out;
}

// ============================================================================
// Test functions
// ============================================================================

namespace {

double unit_bump(double s) {
  const double q = 1.0 - s * s;
  if (q <= 0.0) return 0.0;
  return std::exp(1.0 - 1.0 / q);
}

double unit_bump_derivative(double s) {
  const double q = 1.0 - s * s;
  if (q <= 0.0) return 0.0;
  return std::exp(1.0 - 1.0 / q) * (-2.0 * s / (q * q));
}

}  // namespace

double unit_bump_integral() {
  // Trapezoid on a C-infinity function whose derivatives all vanish at +-1
  // converges faster than any power; 20000 panels is far below 1e-15.
  static const double value = [] {
    const int n = 20000;
    const double h = 2.0 / n;
    double s = 0.0;
    for (int i = 1; i < n; ++i) s += unit_bump(-1.0 + i * h);
    return s * h;
  }();
  return value;
}

TestFunction make_test_function(std::size_t dim, ScalarFn fn, double sup_bound) {
  TestFunction f;
  f.dim = dim;
  f.value = std::move(fn);
  f.support = Box::unbounded(dim);
  f.sup_bound = sup_bound;
  return f;
}

TestFunction bump_function(Vec center, Vec radius) {
  if (center.size() != radius.size() || center.empty()) {
    throw DimensionError("bump_function: center/radius dimension mismatch");
  }
  for (double r : radius) {
    if (!(r > 0.0)) throw ParameterError("bump_function: radius must be positive");
  }
  const std::size_t d = center.size();
  TestFunction f;
  f.dim = d;
  Vec lo(d), hi(d);
  double integral = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    lo[i] = center[i] - radius[i];
    hi[i] = center[i] + radius[i];
    integral *= radius[i] * unit_bump_integral();
  }
  f.support = Box(lo, hi);
  f.sup_bound = 1.0;
  f.integral = integral;
  f.value = [center, radius](std::span<const double> x) {
    double v = 1.0;
    for (std::size_t i = 0; i < center.size(); ++i) {
      v *= unit_bump((x[i] - center[i]) / radius[i]);
      if (v == 0.0) return 0.0;
    }
    return v;
  };
  f.gradient = [center, radius](std::span<const double> x, std::span<double> g) {
    const std::size_t dd = center.size();
    Vec val(dd), der(dd);
    for (std::size_t i = 0; i < dd; ++i) {
      const double s = (x[i] - center[i]) / radius[i];
      val[i] = unit_bump(s);
      der[i] = unit_bump_derivative(s) / radius[i];
    }
    for (std::size_t i = 0; i < dd; ++i) {
      double gi = der[i];
      for (std::size_t j = 0; j < dd; ++j) {
        if (j != i) gi *= val[j];
      }
      g[i] = gi;
    }
  };
  return f;
}

TestFunctionDictionary default_dictionary(const Box& reference, int levels) {
  if (!reference.bounded()) throw ParameterError("default_dictionary: reference box must be bounded");
  if (levels < 1) throw ParameterError("default_dictionary: need at least one level");
  const std::size_t d = reference.dim();
  TestFunctionDictionary dict;
  for (int level = 0; level < levels; ++level) {
    const std::size_t m = std::size_t{1} << level;
    Vec width(d);
    for (std::size_t a = 0; a < d; ++a) width[a] = (reference.hi[a] - reference.lo[a]) / m;
    std::size_t count = 1;
    for (std::size_t a = 0; a < d; ++a) count *= m;
    for (std::size_t flat = 0; flat < count; ++flat) {
      Vec center(d);
      std::size_t rem = flat;
      for (std::size_t a = d; a-- > 0;) {
        const std::size_t idx = rem % m;
        rem /= m;
        center[a] = reference.lo[a] + (idx + 0.5) * width[a];
      }
      dict.functions.push_back(bump_function(center, width));
    }
  }
  return dict;
}

double integrate_test(const ParticleMeasure& mu, const TestFunction& phi) {
  if (phi.dim != mu.dim()) throw DimensionError("integrate_test: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.weight(i) == 0.0) continue;
    const auto x = mu.point(i);
    if (!phi.support.contains(x)) continue;
    s += mu.weight(i) * phi.value(x);
  }
  return s;
}

ParticleMeasure pushforward(const ParticleMeasure& mu, const MapFn& T) {
  std::vector<double> coords;
  coords.reserve(mu.coords().size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    Vec y;
    try {
      y = T(mu.point(i));
    } catch (const std::exception& e) {
      throw Error("pushforward: map undefined at particle " + std::to_string(i) + ": " + e.what());
    }
    if (y.size() != mu.dim()) throw DimensionError("pushforward: map changes dimension");
    coords.insert(coords.end(), y.begin(), y.end());
  }
  return ParticleMeasure(mu.dim(), std::move(coords), mu.weights());
}

double weak_distance(const ParticleMeasure& mu, const ParticleMeasure& nu,
                     const TestFunctionDictionary& dict) {
  if (mu.dim() != nu.dim()) throw DimensionError("weak_distance: measures differ in dimension");
  if (dict.functions.empty()) throw ParameterError("weak_distance: empty dictionary");
  if (dict.dim() != mu.dim()) throw DimensionError("weak_distance: dictionary dimension mismatch");
  double dist = 0.0;
  double scale = 0.5;
  for (const auto& phi : dict.functions) {
    const double diff = std::abs(integrate_test(mu, phi) - integrate_test(nu, phi)) / phi.sup_bound;
    dist += scale * std::min(1.0, diff);
    scale *= 0.5;
  }
  return dist;
}

// ============================================================================
// Grids and densities
// ============================================================================

GridSpec::GridSpec(Box box_, std::vector<std::size_t> cells_)
    : box(std::move(box_)), cells(std::move(cells_)) {
  if (cells.size() != box.dim()) throw DimensionError("GridSpec: cells/box dimension mismatch");
  if (!box.bounded()) throw ParameterError("GridSpec: box must be bounded");
  for (auto c : cells) {
    if (c == 0) throw ParameterError("GridSpec: zero cells on an axis");
  }
}

GridSpec GridSpec::uniform(const Box& box, std::size_t cells_per_axis) {
  return GridSpec(box, std::vector<std::size_t>(box.dim(), cells_per_axis));
}

std::size_t GridSpec::total_cells() const {
  std::size_t n = 1;
  for (auto c : cells) n *= c;
  return n;
}

double GridSpec::cell_width(std::size_t axis) const {
  return (box.hi[axis] - box.lo[axis]) / static_cast<double>(cells[axis]);
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (std::size_t a = 0; a < dim(); ++a) v *= cell_width(a);
  return v;
}

std::size_t GridSpec::flat_index(std::span<const std::size_t> idx) const {
  std::size_t flat = 0;
  for (std::size_t a = 0; a < dim(); ++a) flat = flat * cells[a] + idx[a];
  return flat;
}

std::vector<std::size_t> GridSpec::multi_index(std::size_t flat) const {
  std::vector<std::size_t> idx(dim());
  for (std::size_t a = dim(); a-- > 0;) {
    idx[a] = flat % cells[a];
    flat /= cells[a];
  }
  return idx;
}

Vec GridSpec::cell_center(std::size_t flat) const {
  const auto idx = multi_index(flat);
  Vec c(dim());
  for (std::size_t a = 0; a < dim(); ++a) c[a] = box.lo[a] + (idx[a] + 0.5) * cell_width(a);
  return c;
}

double GridDensity::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.cell_volume();
}

double GridDensity::max_value() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, v);
  return m;
}

namespace {

// Standard normal CDF.
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Gaussian mass of [a, b] for N(x, h^2), accurate in both tails.
double interval_mass(double a, double b, double x, double h) {
  const double za = (a - x) / h;
  const double zb = (b - x) / h;
  if (za > 0.0) return normal_cdf(-za) - normal_cdf(-zb);
  return normal_cdf(zb) - normal_cdf(za);
}

}  // namespace

GridDensity density_estimate(const ParticleMeasure& mu, const GridSpec& grid, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ParameterError("density_estimate: bandwidth must be positive");
  if (grid.dim() != mu.dim()) throw DimensionError("density_estimate: grid dimension mismatch");
  const std::size_t d = mu.dim();
  GridDensity out;
  out.grid = grid;
  out.values.assign(grid.total_cells(), 0.0);
  const double reach = 8.0 * bandwidth;
  const double cellvol = grid.cell_volume();

  std::vector<std::size_t> first(d), count(d), idx(d);
  std::vector<Vec> axis_mass(d);
  double spill = 0.0;
  for (std::size_t p = 0; p < mu.size(); ++p) {
    const double w = mu.weight(p);
    if (w == 0.0) continue;
    const auto x = mu.point(p);
    double inside = 1.0;
    bool empty = false;
    for (std::size_t a = 0; a < d; ++a) {
      const double width = grid.cell_width(a);
      const double lo = grid.box.lo[a];
      const long ncell = static_cast<long>(grid.cells[a]);
      long i0 = static_cast<long>(std::floor((x[a] - reach - lo) / width));
      long i1 = static_cast<long>(std::floor((x[a] + reach - lo) / width));
      i0 = std::max(i0, 0L);
      i1 = std::min(i1, ncell - 1);
      if (i1 < i0) {
        empty = true;
        break;
      }
      first[a] = static_cast<std::size_t>(i0);
      count[a] = static_cast<std::size_t>(i1 - i0 + 1);
      axis_mass[a].resize(count[a]);
      double s = 0.0;
      for (std::size_t k = 0; k < count[a]; ++k) {
        const double a0 = lo + (first[a] + k) * width;
        axis_mass[a][k] = interval_mass(a0, a0 + width, x[a], bandwidth);
        s += axis_mass[a][k];
      }
      inside *= s;
    }
    if (empty) {
      spill += w;
      continue;
    }
    spill += w * (1.0 - inside);
    // Outer product over the window.
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      double m = w;
      std::size_t flat = 0;
      for (std::size_t a = 0; a < d; ++a) {
        m *= axis_mass[a][idx[a]];
        flat = flat * grid.cells[a] + first[a] + idx[a];
      }
      out.values[flat] += m / cellvol;
      std::size_t a = d;
      while (a-- > 0) {
        if (++idx[a] < count[a]) break;
        idx[a] = 0;
      }
      if (a == static_cast<std::size_t>(-1)) break;
    }
  }
  out.spill = std::max(spill, 0.0);
  return out;
}

double mean_nearest_neighbor_spacing(const ParticleMeasure& mu) {
  const std::size_t n = mu.size();
  const std::size_t d = mu.dim();
  if (n < 2) throw ParameterError("mean_nearest_neighbor_spacing: need at least two particles");
  Vec lo(d, kInf), hi(d, -kInf);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      lo[a] = std::min(lo[a], mu.point(i)[a]);
      hi[a] = std::max(hi[a], mu.point(i)[a]);
    }
  }
  double vol = 1.0;
  double max_extent = 0.0;
  for (std::size_t a = 0; a < d; ++a) max_extent = std::max(max_extent, hi[a] - lo[a]);
  if (max_extent == 0.0) return 0.0;
  for (std::size_t a = 0; a < d; ++a) vol *= std::max(hi[a] - lo[a], max_extent * 1e-6);
  const double h = std::pow(vol / static_cast<double>(n), 1.0 / static_cast<double>(d));

  std::vector<long> ncell(d);
  for (std::size_t a = 0; a < d; ++a) ncell[a] = static_cast<long>((hi[a] - lo[a]) / h) + 1;
  auto cell_of = [&](std::span<const double> x, std::vector<long>& c) {
    for (std::size_t a = 0; a < d; ++a) {
      c[a] = std::min(static_cast<long>((x[a] - lo[a]) / h), ncell[a] - 1);
    }
  };
  auto key_of = [&](const std::vector<long>& c) {
    std::uint64_t k = 0;
    for (std::size_t a = 0; a < d; ++a) k = k * static_cast<std::uint64_t>(ncell[a]) + c[a];
    return k;
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
  std::vector<long> c(d);
  for (std::size_t i = 0; i < n; ++i) {
    cell_of(mu.point(i), c);
    buckets[key_of(c)].push_back(i);
  }

  long max_ring = 0;
  for (std::size_t a = 0; a < d; ++a) max_ring = std::max(max_ring, ncell[a]);

  double total = 0.0;
  std::vector<long> off(d), nb(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.point(i);
    cell_of(x, c);
    double best = kInf;
    for (long r = 0; r <= max_ring; ++r) {
      // Every point in ring r+1 or beyond is at least r*h away.
      if (best <= r * h) break;
      // Enumerate offsets with Chebyshev norm exactly r.
      std::fill(off.begin(), off.end(), -r);
      while (true) {
        long cheb = 0;
        for (std::size_t a = 0; a < d; ++a) cheb = std::max(cheb, std::labs(off[a]));
        bool valid = cheb == r;
        for (std::size_t a = 0; a < d && valid; ++a) {
          nb[a] = c[a] + off[a];
          if (nb[a] < 0 || nb[a] >= ncell[a]) valid = false;
        }
        if (valid) {
          auto it = buckets.find(key_of(nb));
          if (it != buckets.end()) {
            for (std::size_t j : it->second) {
              if (j == i) continue;
              double s = 0.0;
              for (std::size_t a = 0; a < d; ++a) {
                const double diff = mu.point(j)[a] - x[a];
                s += diff * diff;
              }
              best = std::min(best, std::sqrt(s));
            }
          }
        }
        std::size_t a = d;
        while (a-- > 0) {
          if (++off[a] <= r) break;
          off[a] = -r;
        }
        if (a == static_cast<std::size_t>(-1)) break;
      }
    }
    total += best;
  }
  return total / static_cast<double>(n);
}

double default_bandwidth(const ParticleMeasure& mu) {
  const double s = mean_nearest_neighbor_spacing(mu);
  if (!(s > 0.0)) throw ParameterError("default_bandwidth: particles are all coincident");
  return 2.0 * s;
}

DensityBoundReport check_density_bound(const GridDensity& rho, double C, double slack) {
  if (!(C > 0.0)) throw ParameterError("check_density_bound: C must be positive");
  DensityBoundReport r;
  r.max_density = rho.max_value();
  r.bound = C;
  r.slack = slack;
  r.pass = r.max_density <= C * (1.0 + slack);
  return r;
}

// ============================================================================
// Ensembles
// ============================================================================

std::size_t MeasureEnsemble::dim() const {
  return members.empty() ? 0 : members.front().dim();
}

double MeasureEnsemble::total_weight() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void MeasureEnsemble::add(double weight, ParticleMeasure mu) {
  if (!(weight >= 0.0)) throw ParameterError("MeasureEnsemble::add: negative ensemble weight");
  if (!members.empty() && mu.dim() != dim()) {
    throw DimensionError("MeasureEnsemble::add: member dimension mismatch");
  }
  weights.push_back(weight);
  members.push_back(std::move(mu));
}

ParticleMeasure expectation(const MeasureEnsemble& nu) {
  if (nu.members.empty()) throw ParameterError("expectation: empty ensemble");
  ParticleMeasure out(nu.dim());
  for (std::size_t j = 0; j < nu.size(); ++j) {
    const auto& mu = nu.members[j];
    if (mu.dim() != out.dim()) throw DimensionError("expectation: member dimension mismatch");
    for (std::size_t i = 0; i < mu.size(); ++i) out.add(mu.point(i), nu.weights[j] * mu.weight(i));
  }
  return out;
}

MeasureEnsemble dirac_ensemble(const ScalarFn& rho, const GridSpec& grid) {
  MeasureEnsemble nu;
  const double vol = grid.cell_volume();
  double mass = 0.0;
  for (std::size_t c = 0; c < grid.total_cells(); ++c) {
    const Vec x = grid.cell_center(c);
    const double r = rho(x);
    if (!(r >= 0.0)) throw ParameterError("dirac_ensemble: density is negative or NaN");
    nu.add(r * vol, ParticleMeasure::dirac(x));
    mass += r * vol;
  }
  if (!(mass > 0.0)) throw ParameterError("dirac_ensemble: density has zero mass");
  return nu;
}

MeasureEnsemble dirac_ensemble(const ScalarFn& rho, const Box& box, std::size_t n,
                               std::uint64_t seed) {
  if (n == 0) throw ParameterError("dirac_ensemble: need at least one member");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double vol = box.volume();
  MeasureEnsemble nu;
  double mass = 0.0;
  Vec x(box.dim());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t a = 0; a < box.dim(); ++a) x[a] = box.lo[a] + (box.hi[a] - box.lo[a]) * unif(rng);
    const double r = rho(x);
    if (!(r >= 0.0)) throw ParameterError("dirac_ensemble: density is negative or NaN");
    nu.add(r * vol / static_cast<double>(n), ParticleMeasure::dirac(x));
    mass += r;
  }
  if (!(mass > 0.0)) throw ParameterError("dirac_ensemble: density has zero mass");
  return nu;
}

MeasureEnsemble product_ensemble(const ScalarFn& rho, const GridSpec& x_grid,
                                 const ParticleMeasure& gamma, std::vector<std::string>* warnings) {
  const std::size_t n = x_grid.dim();
  if (gamma.dim() != n) {
    throw DimensionError("product_ensemble: gamma lives in R^" + std::to_string(gamma.dim()) +
                         " but rho in R^" + std::to_string(n));
  }
  if (warnings != nullptr) {
    if (gamma.size() < 2) {
      warnings->push_back("product_ensemble: gamma is atomic, not dominated by a multiple of Lebesgue measure");
    } else {
      // KDE surrogate for gamma <= C L^n: peak density relative to the mean
      // density over the support bounding box.
      Vec lo(n, kInf), hi(n, -kInf);
      for (std::size_t i = 0; i < gamma.size(); ++i) {
        for (std::size_t a = 0; a < n; ++a) {
          lo[a] = std::min(lo[a], gamma.point(i)[a]);
          hi[a] = std::max(hi[a], gamma.point(i)[a]);
        }
      }
      const double h = default_bandwidth(gamma);
      for (std::size_t a = 0; a < n; ++a) {
        lo[a] -= 4.0 * h;
        hi[a] += 4.0 * h;
      }
      const auto dens = density_estimate(gamma, GridSpec::uniform(Box(lo, hi), 64), h);
      // Concentrated if a (2h)^n box at peak density would hold all the mass.
      const double peak = dens.max_value();
      if (peak * std::pow(2.0 * h, static_cast<double>(n)) > gamma.total_mass()) {
        warnings->push_back("product_ensemble: gamma looks concentrated at the KDE scale");
      }
    }
  }
  MeasureEnsemble nu;
  const double vol = x_grid.cell_volume();
  double mass = 0.0;
  Vec z(2 * n);
  for (std::size_t c = 0; c < x_grid.total_cells(); ++c) {
    const Vec x = x_grid.cell_center(c);
    const double r = rho(x);
    if (!(r >= 0.0)) throw ParameterError("product_ensemble: density is negative or NaN");
    ParticleMeasure member(2 * n);
    for (std::size_t i = 0; i < gamma.size(); ++i) {
      for (std::size_t a = 0; a < n; ++a) {
        z[a] = x[a];
        z[n + a] = gamma.point(i)[a];
      }
      member.add(z, gamma.weight(i));
    }
    nu.add(r * vol, std::move(member));
    mass += r * vol;
  }
  if (!(mass > 0.0)) throw ParameterError("product_ensemble: density has zero mass");
  return nu;
}

RegularityReport check_regular(const MeasureEnsemble& nu, double C, const GridSpec& grid,
                               double bandwidth, double slack) {
  const auto e = expectation(nu);
  const auto dens = density_estimate(e, grid, bandwidth);
  RegularityReport r;
  r.bound = check_density_bound(dens, C, slack);
  r.spill = dens.spill;
  r.spill_warning = dens.spill > 1e-6 * std::max(e.total_mass(), 1e-300);
  r.pass = r.bound.pass;
  return r;
}

double MeasureCurve::mass_drift() const {
  if (slices.empty()) return 0.0;
  const double m0 = slices.front().total_mass();
  double drift = 0.0;
  for (const auto& s : slices) drift = std::max(drift, std::abs(s.total_mass() - m0));
  return drift;
}

}  // namespace rlf::measures
