#pragma once

// Hamiltonian phase-space fields b(x, p) = (p, c(x)) with c = -grad U, where U
// is a sum of a repulsive Coulomb part (singular on a closed set S), an
// optional harmonic confinement, a constant, and a bounded Lipschitz part.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlf/common.hpp"

namespace rlf::fields {

// ----------------------------------------------------------------------------
// SingularSet: empty, a finite point set, or an affine subspace of R^n.
// ----------------------------------------------------------------------------
class SingularSet {
 public:
  enum class Kind { empty, points, affine };

  static SingularSet empty(std::size_t n);
  static SingularSet points(std::vector<Vec> pts);
  /// origin + span(directions); directions are orthonormalized on construction.
  static SingularSet affine(Vec origin, std::vector<Vec> directions);

  Kind kind() const { return kind_; }
  std::size_t dim() const { return n_; }
  bool is_empty() const { return kind_ == Kind::empty; }

  /// Exact Euclidean distance; +inf for the empty set.
  double distance(std::span<const double> x) const;
  /// Closest point of S (throws for the empty set).
  Vec nearest(std::span<const double> x) const;
  /// x - nearest(x), written to out; returns its norm.
  double offset(std::span<const double> x, std::span<double> out) const;
  /// Distance between S and an axis-aligned box (0 when they intersect).
  double distance_to_box(const Box& box) const;

  const std::vector<Vec>& point_list() const { return points_; }

 private:
  Kind kind_ = Kind::empty;
  std::size_t n_ = 0;
  std::vector<Vec> points_;      // points, or {origin} for affine
  std::vector<Vec> directions_;  // orthonormal basis for affine
};

/// Repulsive Coulomb force -grad(k / dist(x, S)) = k (x - pi_S(x)) / dist^3.
Vec coulomb_force(std::span<const double> x, double k, const SingularSet& S);
void coulomb_force(std::span<const double> x, double k, const SingularSet& S, std::span<double> out);

/// 1 / (dist(x, S)^beta + delta); beta > 1, delta > 0.
double decay_integrand(std::span<const double> x, double beta, double delta, const SingularSet& S);

// ----------------------------------------------------------------------------
// Bounded Lipschitz potential families.
// ----------------------------------------------------------------------------
struct BoundedPart {
  enum class Family { zero, cosine, smoothed_abs };

  Family family = Family::zero;
  double amplitude = 0.0;  // a
  double wavenumber = 1.0; // kappa (cosine)
  double smoothing = 0.1;  // s (smoothed_abs)

  /// cosine:       a cos(kappa <e, x>),          e = (1,..,1)/sqrt(n)
  /// smoothed_abs: a u / (1 + u),                 u = sqrt(|x|^2 + s^2) - s
  double value(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> g) const;
  double sup_norm() const;
  double lipschitz() const;
};

// ----------------------------------------------------------------------------
// Potential U = k / dist(x, S) + omega^2 |x|^2 / 2 + v0 + U_b.
// ----------------------------------------------------------------------------
struct Potential {
  std::size_t n = 1;
  double coulomb_strength = 0.0;  // k; 0 disables the singular part
  SingularSet singular = SingularSet::empty(1);
  double omega = 0.0;
  double constant = 0.0;
  BoundedPart bounded;

  bool has_coulomb() const { return coulomb_strength > 0.0; }
  double value(std::span<const double> x) const;
  /// Coulomb part evaluated with dist replaced by max(dist, clamp_radius).
  double clamped_value(std::span<const double> x, double clamp_radius) const;
  double singular_value(std::span<const double> x) const;
  Vec gradient(std::span<const double> x) const;
  void gradient(std::span<const double> x, std::span<double> g) const;
  /// c(x) = -grad U(x).
  Vec force(std::span<const double> x) const;
};

// ----------------------------------------------------------------------------
// PhaseSpaceField on R^{2n}.
// ----------------------------------------------------------------------------
class PhaseSpaceField {
 public:
  using ForceFn = std::function<void(std::span<const double>, std::span<double>)>;
  using BoundFn = std::function<double(double r, double R)>;

  explicit PhaseSpaceField(Potential U, std::string label = "potential");
  /// Generic force field (not necessarily a gradient); used for fixtures.
  PhaseSpaceField(std::size_t n, ForceFn force, SingularSet S, BoundFn local_bound,
                  std::string label);

  std::size_t n() const { return n_; }
  std::size_t dim() const { return 2 * n_; }
  const SingularSet& singular_set() const { return singular_; }
  const Potential* potential() const { return potential_ ? &*potential_ : nullptr; }
  const std::string& label() const { return label_; }

  /// (p, c(x)); throws SingularError when dist(x, S) == 0.
  Vec eval(std::span<const double> z) const;
  void eval(std::span<const double> z, std::span<double> out) const;
  Vec force(std::span<const double> x) const;
  void force(std::span<const double> x, std::span<double> out) const;
  double dist_to_singular(std::span<const double> x) const { return singular_.distance(x); }

  /// Upper bound of |c| on {dist(., S) >= r} intersected with the ball B_R.
  double local_bound(double r, double R = kInf) const;

  /// |p|^2/2 + U(x); requires a potential.
  double energy(std::span<const double> z) const;

 private:
  std::size_t n_;
  std::shared_ptr<const Potential> potential_;
  ForceFn force_;
  SingularSet singular_;
  BoundFn bound_;
  std::string label_;
};

// ----------------------------------------------------------------------------
// Field specs: "free", "harmonic(omega=1)", "coulomb(k=1) + cosine(a=0.1)".
// Terms: free | zero | harmonic(omega) | constant(v0) | coulomb(k, x0) |
//        cosine(a, kappa) | smoothed_abs(a, s)
// ----------------------------------------------------------------------------
struct FieldTerm {
  std::string family;
  std::map<std::string, double> params;
};

std::vector<FieldTerm> parse_field_spec(const std::string& spec);
Potential make_potential(const std::string& spec, std::size_t n = 1);
PhaseSpaceField make_field(const std::string& spec, std::size_t n = 1);

}  // namespace rlf::fields
