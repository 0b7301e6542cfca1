#include "rlf/common.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace rlf {

Box::Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw DimensionError("Box: lo/hi dimension mismatch");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(hi[i] > lo[i])) throw ParameterError("Box: empty extent on axis " + std::to_string(i));
  }
}

Box Box::cube(std::size_t dim, double lo, double hi) {
  return Box(Vec(dim, lo), Vec(dim, hi));
}

Box Box::unbounded(std::size_t dim) { return Box(Vec(dim, -kInf), Vec(dim, kInf)); }

bool Box::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return false;
  }
  return true;
}

double Box::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

bool Box::bounded() const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) return false;
  }
  return true;
}

double distance_to_box(std::span<const double> x, const Box& box) {
  double s = 0.0;
  for (std::size_t i = 0; i < box.dim(); ++i) {
    double d = 0.0;
    if (x[i] < box.lo[i]) d = box.lo[i] - x[i];
    else if (x[i] > box.hi[i]) d = x[i] - box.hi[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double a : v) s += a * a;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::size_t worker_count() {
  static const std::size_t count = [] {
    if (const char* env = std::getenv("RLF_LAB_THREADS")) {
      long v = std::strtol(env, nullptr, 10);
      if (v > 0) return static_cast<std::size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<std::size_t>(hw == 0 ? 1 : hw);
  }();
  return count;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rlf
