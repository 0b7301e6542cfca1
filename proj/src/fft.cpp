#include "rlf/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

#include "rlf/common.hpp"

namespace rlf {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct Fft::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
};

Fft::Fft(std::size_t n) : n_(n), plans_(std::make_unique<Plans>()) {
  if (n == 0) throw ParameterError("Fft: length must be positive");
  std::vector<std::complex<double>> scratch(n);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  std::lock_guard<std::mutex> lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->fwd = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_FORWARD, flags);
  plans_->bwd = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, FFTW_BACKWARD, flags);
  if (!plans_->fwd || !plans_->bwd) throw NumericalError("Fft: planning failed");
}

Fft::~Fft() {
  if (!plans_) return;
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plans_->fwd) fftw_destroy_plan(plans_->fwd);
  if (plans_->bwd) fftw_destroy_plan(plans_->bwd);
}

Fft::Fft(Fft&&) noexcept = default;
Fft& Fft::operator=(Fft&& other) noexcept {
  if (this != &other) {
    Fft tmp(std::move(*this));
    n_ = other.n_;
    plans_ = std::move(other.plans_);
  }
  return *this;
}

void Fft::forward(std::complex<double>* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plans_->fwd, p, p);
}

void Fft::inverse(std::complex<double>* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plans_->bwd, p, p);
}

}  // namespace rlf
