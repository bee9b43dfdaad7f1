#include "twm/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <type_traits>

namespace twm {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
struct Fftw;

template <>
struct Fftw<double> {
  using complex = fftw_complex;
  using plan = fftw_plan;
  static double* alloc_real(std::size_t n) { return fftw_alloc_real(n); }
  static complex* alloc_complex(std::size_t n) { return fftw_alloc_complex(n); }
  static plan r2c(int n, double* in, complex* out) { return fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE); }
  static plan c2r(int n, complex* in, double* out) { return fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE); }
  static void execute(plan p) { fftw_execute(p); }
  static void destroy(plan p) { fftw_destroy_plan(p); }
  static void free(void* p) { fftw_free(p); }
};

template <>
struct Fftw<float> {
  using complex = fftwf_complex;
  using plan = fftwf_plan;
  static float* alloc_real(std::size_t n) { return fftwf_alloc_real(n); }
  static complex* alloc_complex(std::size_t n) { return fftwf_alloc_complex(n); }
  static plan r2c(int n, float* in, complex* out) { return fftwf_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE); }
  static plan c2r(int n, complex* in, float* out) { return fftwf_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE); }
  static void execute(plan p) { fftwf_execute(p); }
  static void destroy(plan p) { fftwf_destroy_plan(p); }
  static void free(void* p) { fftwf_free(p); }
};

}  // namespace

template <typename T>
struct RealFft<T>::Impl {
  using F = Fftw<T>;
  T* real = nullptr;
  typename F::complex* spec = nullptr;
  typename F::plan fwd = nullptr;
  typename F::plan inv = nullptr;
};

template <typename T>
RealFft<T>::RealFft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
  using F = Fftw<T>;
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("RealFft: length must be even and >= 2");
  std::lock_guard lock(planner_mutex());
  impl_->real = F::alloc_real(n);
  impl_->spec = F::alloc_complex(n / 2 + 1);
  const int len = static_cast<int>(n);
  impl_->fwd = F::r2c(len, impl_->real, impl_->spec);
  impl_->inv = F::c2r(len, impl_->spec, impl_->real);
}

template <typename T>
RealFft<T>::~RealFft() {
  using F = Fftw<T>;
  std::lock_guard lock(planner_mutex());
  F::destroy(impl_->fwd);
  F::destroy(impl_->inv);
  F::free(impl_->real);
  F::free(impl_->spec);
}

template <typename T>
void RealFft<T>::forward(const T* in, std::complex<T>* out) {
  std::memcpy(impl_->real, in, n_ * sizeof(T));
  Fftw<T>::execute(impl_->fwd);
  std::memcpy(static_cast<void*>(out), impl_->spec, bins() * 2 * sizeof(T));
}

template <typename T>
void RealFft<T>::inverse(const std::complex<T>* in, T* out) {
  // c2r overwrites its input, so the copy in impl_->spec is consumed.
  std::memcpy(impl_->spec, static_cast<const void*>(in), bins() * 2 * sizeof(T));
  impl_->spec[0][1] = T(0);
  impl_->spec[n_ / 2][1] = T(0);
  Fftw<T>::execute(impl_->inv);
  std::memcpy(out, impl_->real, n_ * sizeof(T));
}

template <typename T>
RealFft<T>& RealFft<T>::cached(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft<T>>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft<T>>(n);
  return *slot;
}

template class RealFft<float>;
template class RealFft<double>;

}  // namespace twm
