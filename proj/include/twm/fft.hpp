#pragma once

#include <complex>
#include <cstddef>
#include <memory>

namespace twm {

/// Real-input FFT of fixed length n (FFTW backend, FFTW_ESTIMATE plans so the
/// chosen algorithm, and therefore the rounding, is reproducible run to run).
template <typename T>
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// out[k] = sum_j in[j] exp(-2 pi i j k / n), k in [0, n/2].
  void forward(const T* in, std::complex<T>* out);

  /// Unnormalized inverse of the Hermitian extension of `in` (n/2+1 bins).
  /// Imaginary parts of the DC and Nyquist bins are ignored.
  void inverse(const std::complex<T>* in, T* out);

  /// Per-thread cached instance for length n.
  static RealFft& cached(std::size_t n);

 private:
  struct Impl;
  std::size_t n_;
  std::unique_ptr<Impl> impl_;
};

extern template class RealFft<float>;
extern template class RealFft<double>;

}  // namespace twm
