#include "rlf/fields.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace rlf::fields {

// ============================================================================
// SingularSet
// ============================================================================

SingularSet SingularSet::empty(std::size_t n) {
  SingularSet s;
  s.kind_ = Kind::empty;
  s.n_ = n;
  return s;
}

SingularSet SingularSet::points(std::vector<Vec> pts) {
  if (pts.empty()) throw ParameterError("SingularSet::points: empty point list (use empty())");
  SingularSet s;
  s.kind_ = Kind::points;
  s.n_ = pts.front().size();
  for (const auto& p : pts) {
    if (p.size() != s.n_) throw DimensionError("SingularSet::points: inconsistent dimensions");
  }
  s.points_ = std::move(pts);
  return s;
}

SingularSet SingularSet::affine(Vec origin, std::vector<Vec> directions) {
  SingularSet s;
  s.n_ = origin.size();
  // Gram-Schmidt.
  for (auto v : directions) {
    if (v.size() != s.n_) throw DimensionError("SingularSet::affine: direction has wrong dimension");
    for (const auto& e : s.directions_) {
      const double c = dot(v, e);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * e[i];
    }
    const double nv = norm2(v);
    if (nv < 1e-12) throw ParameterError("SingularSet::affine: directions are linearly dependent");
    for (double& a : v) a /= nv;
    s.directions_.push_back(std::move(v));
  }
  if (s.directions_.size() >= s.n_) {
    throw ParameterError("SingularSet::affine: subspace must have positive codimension");
  }
  s.points_ = {std::move(origin)};
  s.kind_ = s.directions_.empty() ? Kind::points : Kind::affine;
  return s;
}

Vec SingularSet::nearest(std::span<const double> x) const {
  switch (kind_) {
    case Kind::empty:
      throw ParameterError("SingularSet::nearest: empty set has no nearest point");
    case Kind::points: {
      std::size_t best = 0;
      double bd = kInf;
      for (std::size_t k = 0; k < points_.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += (x[i] - points_[k][i]) * (x[i] - points_[k][i]);
        if (s < bd) {
          bd = s;
          best = k;
        }
      }
      return points_[best];
    }
    case Kind::affine: {
      const Vec& o = points_.front();
      Vec y(n_);
      for (std::size_t i = 0; i < n_; ++i) y[i] = x[i] - o[i];
      Vec out = o;
      for (const auto& e : directions_) {
        const double c = dot(y, e);
        for (std::size_t i = 0; i < n_; ++i) out[i] += c * e[i];
      }
      return out;
    }
  }
  return {};
}

double SingularSet::offset(std::span<const double> x, std::span<double> out) const {
  switch (kind_) {
    case Kind::empty:
      throw ParameterError("SingularSet::offset: empty set");
    case Kind::points: {
      std::size_t best = 0;
      double bd = kInf;
      for (std::size_t k = 0; k < points_.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += (x[i] - points_[k][i]) * (x[i] - points_[k][i]);
        if (s < bd) {
          bd = s;
          best = k;
        }
      }
      for (std::size_t i = 0; i < n_; ++i) out[i] = x[i] - points_[best][i];
      return std::sqrt(bd);
    }
    case Kind::affine: {
      const Vec q = nearest(x);
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        out[i] = x[i] - q[i];
        s += out[i] * out[i];
      }
      return std::sqrt(s);
    }
  }
  return kInf;
}

double SingularSet::distance(std::span<const double> x) const {
  if (kind_ == Kind::empty) return kInf;
  if (kind_ == Kind::points && points_.size() == 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += (x[i] - points_[0][i]) * (x[i] - points_[0][i]);
    return std::sqrt(s);
  }
  double buf[16];
  Vec heap;
  std::span<double> out(buf, n_);
  if (n_ > 16) {
    heap.resize(n_);
    out = heap;
  }
  return offset(x, out);
}

double SingularSet::distance_to_box(const Box& box) const {
  if (box.dim() != n_) throw DimensionError("SingularSet::distance_to_box: dimension mismatch");
  switch (kind_) {
    case Kind::empty:
      return kInf;
    case Kind::points: {
      double d = kInf;
      for (const auto& p : points_) d = std::min(d, rlf::distance_to_box(p, box));
      return d;
    }
    case Kind::affine: {
      // Alternating projections between two closed convex sets converge to a
      // pair of nearest points.
      Vec y = points_.front();
      Vec b(n_);
      double prev = kInf;
      double d = kInf;
      for (int it = 0; it < 10000; ++it) {
        for (std::size_t i = 0; i < n_; ++i) b[i] = std::clamp(y[i], box.lo[i], box.hi[i]);
        y = nearest(b);
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i) s += (y[i] - b[i]) * (y[i] - b[i]);
        d = std::sqrt(s);
        if (prev - d <= 1e-15 * (1.0 + d)) break;
        prev = d;
      }
      return d;
    }
  }
  return kInf;
}

void coulomb_force(std::span<const double> x, double k, const SingularSet& S, std::span<double> out) {
  if (!(k > 0.0)) throw ParameterError("coulomb_force: strength k must be positive (repulsive)");
  if (S.is_empty()) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double dist = S.offset(x, out);
  if (dist == 0.0) throw SingularError("coulomb_force: evaluation on the singular set");
  const double scale = k / (dist * dist * dist);
  for (double& a : out) a *= scale;
}

Vec coulomb_force(std::span<const double> x, double k, const SingularSet& S) {
  Vec out(x.size());
  coulomb_force(x, k, S, out);
  return out;
}

double decay_integrand(std::span<const double> x, double beta, double delta, const SingularSet& S) {
  if (!(beta > 1.0)) throw ParameterError("decay_integrand: beta must exceed 1");
  if (!(delta > 0.0)) throw ParameterError("decay_integrand: delta must be positive");
  const double d = S.distance(x);
  if (std::isinf(d)) return 0.0;
  return 1.0 / (std::pow(d, beta) + delta);
}

// ============================================================================
// BoundedPart
// ============================================================================

double BoundedPart::value(std::span<const double> x) const {
  switch (family) {
    case Family::zero:
      return 0.0;
    case Family::cosine: {
      double s = 0.0;
      for (double a : x) s += a;
      return amplitude * std::cos(wavenumber * s / std::sqrt(static_cast<double>(x.size())));
    }
    case Family::smoothed_abs: {
      const double r2 = dot(x, x);
      const double u = std::sqrt(r2 + smoothing * smoothing) - smoothing;
      return amplitude * u / (1.0 + u);
    }
  }
  return 0.0;
}

void BoundedPart::gradient(std::span<const double> x, std::span<double> g) const {
  switch (family) {
    case Family::zero:
      std::fill(g.begin(), g.end(), 0.0);
      return;
    case Family::cosine: {
      const double rn = std::sqrt(static_cast<double>(x.size()));
      double s = 0.0;
      for (double a : x) s += a;
      const double c = -amplitude * wavenumber * std::sin(wavenumber * s / rn) / rn;
      std::fill(g.begin(), g.end(), c);
      return;
    }
    case Family::smoothed_abs: {
      const double root = std::sqrt(dot(x, x) + smoothing * smoothing);
      const double u = root - smoothing;
      const double c = amplitude / ((1.0 + u) * (1.0 + u) * root);
      for (std::size_t i = 0; i < x.size(); ++i) g[i] = c * x[i];
      return;
    }
  }
}

double BoundedPart::sup_norm() const {
  return family == Family::zero ? 0.0 : std::abs(amplitude);
}

double BoundedPart::lipschitz() const {
  switch (family) {
    case Family::zero:
      return 0.0;
    case Family::cosine:
      return std::abs(amplitude * wavenumber);
    case Family::smoothed_abs:
      return std::abs(amplitude);
  }
  return 0.0;
}

// ============================================================================
// Potential
// ============================================================================

double Potential::singular_value(std::span<const double> x) const {
  if (!has_coulomb()) return 0.0;
  const double d = singular.distance(x);
  if (d == 0.0) throw SingularError("Potential: evaluation on the singular set");
  return coulomb_strength / d;
}

double Potential::value(std::span<const double> x) const {
  double u = singular_value(x) + constant + bounded.value(x);
  if (omega != 0.0) u += 0.5 * omega * omega * dot(x, x);
  return u;
}

double Potential::clamped_value(std::span<const double> x, double clamp_radius) const {
  double u = constant + bounded.value(x);
  if (omega != 0.0) u += 0.5 * omega * omega * dot(x, x);
  if (has_coulomb()) u += coulomb_strength / std::max(singular.distance(x), clamp_radius);
  return u;
}

void Potential::gradient(std::span<const double> x, std::span<double> g) const {
  bounded.gradient(x, g);
  if (omega != 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += omega * omega * x[i];
  }
  if (has_coulomb()) {
    double buf[16];
    Vec heap;
    std::span<double> c(buf, x.size());
    if (x.size() > 16) {
      heap.resize(x.size());
      c = heap;
    }
    coulomb_force(x, coulomb_strength, singular, c);
    for (std::size_t i = 0; i < x.size(); ++i) g[i] -= c[i];
  }
}

Vec Potential::gradient(std::span<const double> x) const {
  Vec g(x.size(), 0.0);
  gradient(x, g);
  return g;
}

Vec Potential::force(std::span<const double> x) const {
  Vec g = gradient(x);
  for (double& a : g) a = -a;
  return g;
}

// ============================================================================
// PhaseSpaceField
// ============================================================================

PhaseSpaceField::PhaseSpaceField(Potential U, std::string label)
    : n_(U.n), potential_(std::make_shared<const Potential>(std::move(U))), label_(std::move(label)) {
  const Potential* pot = potential_.get();
  singular_ = pot->has_coulomb() ? pot->singular : SingularSet::empty(n_);
  force_ = [pot](std::span<const double> x, std::span<double> out) {
    pot->gradient(x, out);
    for (double& a : out) a = -a;
  };
  bound_ = [pot](double r, double R) {
    double b = pot->bounded.lipschitz();
    if (pot->has_coulomb()) b += pot->coulomb_strength / (r * r);
    if (pot->omega != 0.0) b += pot->omega * pot->omega * R;
    return b;
  };
}

PhaseSpaceField::PhaseSpaceField(std::size_t n, ForceFn force, SingularSet S, BoundFn local_bound,
                                 std::string label)
    : n_(n),
      force_(std::move(force)),
      singular_(std::move(S)),
      bound_(std::move(local_bound)),
      label_(std::move(label)) {
  if (singular_.dim() != n_) throw DimensionError("PhaseSpaceField: singular set dimension mismatch");
}

void PhaseSpaceField::force(std::span<const double> x, std::span<double> out) const {
  if (!singular_.is_empty() && singular_.distance(x) == 0.0) {
    throw SingularError("PhaseSpaceField: force evaluated on the singular set");
  }
  force_(x, out);
}

Vec PhaseSpaceField::force(std::span<const double> x) const {
  Vec out(n_);
  force(x, out);
  return out;
}

void PhaseSpaceField::eval(std::span<const double> z, std::span<double> out) const {
  if (z.size() != 2 * n_ || out.size() != 2 * n_) {
    throw DimensionError("PhaseSpaceField::eval: dimension mismatch");
  }
  for (std::size_t i = 0; i < n_; ++i) out[i] = z[n_ + i];
  force(z.subspan(0, n_), out.subspan(n_, n_));
}

Vec PhaseSpaceField::eval(std::span<const double> z) const {
  Vec out(2 * n_);
  eval(z, out);
  return out;
}

double PhaseSpaceField::local_bound(double r, double R) const {
  if (!(r > 0.0)) throw ParameterError("local_bound: r must be positive");
  return bound_(r, R);
}

double PhaseSpaceField::energy(std::span<const double> z) const {
  if (!potential_) throw ParameterError("PhaseSpaceField::energy: field has no potential");
  const auto p = z.subspan(n_, n_);
  return 0.5 * dot(p, p) + potential_->value(z.subspan(0, n_));
}

// ============================================================================
// Spec parsing
// ============================================================================

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double param(const FieldTerm& t, const std::string& key, double fallback) {
  auto it = t.params.find(key);
  return it == t.params.end() ? fallback : it->second;
}

void check_keys(const FieldTerm& t, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : t.params) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ParameterError("field spec: unknown parameter '" + k + "' for " + t.family);
  }
}

}  // namespace

std::vector<FieldTerm> parse_field_spec(const std::string& spec) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char ch : spec) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == '+' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);

  std::vector<FieldTerm> terms;
  for (const auto& raw : parts) {
    const std::string part = trim(raw);
    if (part.empty()) throw ParameterError("field spec: empty term in '" + spec + "'");
    FieldTerm t;
    const auto open = part.find('(');
    if (open == std::string::npos) {
      t.family = part;
    } else {
      if (part.back() != ')') throw ParameterError("field spec: unbalanced parentheses in '" + part + "'");
      t.family = trim(part.substr(0, open));
      std::stringstream args(part.substr(open + 1, part.size() - open - 2));
      std::string kv;
      while (std::getline(args, kv, ',')) {
        kv = trim(kv);
        if (kv.empty()) continue;
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParameterError("field spec: expected key=value, got '" + kv + "'");
        const std::string key = trim(kv.substr(0, eq));
        const std::string val = trim(kv.substr(eq + 1));
        std::size_t used = 0;
        double v = 0.0;
        try {
          v = std::stod(val, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != val.size() || val.empty()) {
          throw ParameterError("field spec: '" + val + "' is not a number");
        }
        t.params[key] = v;
      }
    }
    terms.push_back(std::move(t));
  }
  return terms;
}

Potential make_potential(const std::string& spec, std::size_t n) {
  if (n == 0) throw DimensionError("make_potential: n must be positive");
  Potential U;
  U.n = n;
  U.singular = SingularSet::empty(n);
  bool have_bounded = false;
  for (const auto& t : parse_field_spec(spec)) {
    if (t.family == "free" || t.family == "zero") {
      check_keys(t, {});
    } else if (t.family == "harmonic") {
      check_keys(t, {"omega"});
      U.omega = param(t, "omega", 1.0);
    } else if (t.family == "constant") {
      check_keys(t, {"v0"});
      U.constant += param(t, "v0", 0.0);
    } else if (t.family == "coulomb") {
      check_keys(t, {"k", "x0"});
      const double k = param(t, "k", 1.0);
      if (!(k > 0.0)) throw ParameterError("coulomb: k must be positive (repulsive)");
      if (U.has_coulomb()) throw ParameterError("field spec: at most one coulomb term");
      U.coulomb_strength = k;
      Vec center(n, 0.0);
      center[0] = param(t, "x0", 0.0);
      U.singular = SingularSet::points({center});
    } else if (t.family == "cosine" || t.family == "smoothed_abs") {
      if (have_bounded) throw ParameterError("field spec: at most one bounded term");
      have_bounded = true;
      if (t.family == "cosine") {
        check_keys(t, {"a", "kappa"});
        U.bounded.family = BoundedPart::Family::cosine;
        U.bounded.amplitude = param(t, "a", 0.1);
        U.bounded.wavenumber = param(t, "kappa", 1.0);
      } else {
        check_keys(t, {"a", "s"});
        U.bounded.family = BoundedPart::Family::smoothed_abs;
        U.bounded.amplitude = param(t, "a", 0.1);
        U.bounded.smoothing = param(t, "s", 0.1);
        if (!(U.bounded.smoothing > 0.0)) throw ParameterError("smoothed_abs: s must be positive");
      }
    } else {
      throw ParameterError("field spec: unknown family '" + t.family + "'");
    }
  }
  return U;
}

PhaseSpaceField make_field(const std::string& spec, std::size_t n) {
  return PhaseSpaceField(make_potential(spec, n), spec);
}

}  // namespace rlf::fields
