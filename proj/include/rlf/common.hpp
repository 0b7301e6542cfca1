#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlf {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ----------------------------------------------------------------------------
// Error hierarchy. Every failure raised by the library derives from rlf::Error.
// ----------------------------------------------------------------------------
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Evaluation of a field on its singular set.
class SingularError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown (non-finite values, CFL violation, unusable flow).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// ----------------------------------------------------------------------------
// Axis-aligned box in R^d.
// ----------------------------------------------------------------------------
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_);

  static Box cube(std::size_t dim, double lo, double hi);
  static Box unbounded(std::size_t dim);

  std::size_t dim() const { return lo.size(); }
  bool contains(std::span<const double> x) const;
  double volume() const;
  bool bounded() const;
};

/// Euclidean distance between x and the closest point of the box.
double distance_to_box(std::span<const double> x, const Box& box);

double norm2(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

/// Shortest round-trip decimal representation, used for every CSV/JSON number
/// so that reruns are byte-identical.
std::string format_double(double v);

/// Runs fn(i) for i in [0, n) over a static partition of worker threads.
/// Each index is processed exactly once; callers write to per-index slots so
/// results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Number of worker threads used by parallel_for (RLF_LAB_THREADS overrides).
std::size_t worker_count();

}  // namespace rlf
