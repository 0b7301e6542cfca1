#pragma once

// In-place complex DFT of fixed length backed by FFTW. Plans are created with
// FFTW_ESTIMATE | FFTW_UNALIGNED, so results do not depend on buffer alignment
// and reruns are bitwise reproducible. Plan creation is serialized; execution
// is safe from several threads as long as each thread owns its Fft.

#include <complex>
#include <cstddef>
#include <memory>

namespace rlf {

class Fft {
 public:
  explicit Fft(std::size_t n);
  ~Fft();
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;
  Fft(Fft&&) noexcept;
  Fft& operator=(Fft&&) noexcept;

  std::size_t size() const { return n_; }
  /// data[k] <- sum_j data[j] exp(-2 pi i jk/n)
  void forward(std::complex<double>* data) const;
  /// data[j] <- sum_k data[k] exp(+2 pi i jk/n)  (unnormalized)
  void inverse(std::complex<double>* data) const;

 private:
  struct Plans;
  std::size_t n_ = 0;
  std::unique_ptr<Plans> plans_;
};

}  // namespace rlf
