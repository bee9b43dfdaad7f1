#pragma once

// STFT-domain operations as differentiable graph nodes. A complex
// spectrogram is a frames x bins x 2 tensor holding (real, imaginary).

#include <cmath>
#include <complex>
#include <vector>

#include "twm/ad/ops.hpp"
#include "twm/dsp.hpp"
#include "twm/fft.hpp"

namespace twm::dsp {

namespace kernels {

/// Source index of padded position p for reflect padding (repeated
/// reflection when the pad exceeds the signal).
inline std::size_t reflect_index(long p, long pad, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long m = (p - pad) % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

template <typename T>
std::vector<T> window(const StftConfig& cfg) {
  const auto w = analysis_window(cfg);
  return std::vector<T>(w.begin(), w.end());
}

/// Overlap-add normalizer: sum over frames of window^2 at each padded position.
template <typename T>
std::vector<T> window_envelope(const StftConfig& cfg, std::size_t frames, const std::vector<T>& win) {
  std::vector<T> env(cfg.n_fft + (frames - 1) * cfg.hop, T(0));
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t n = 0; n < cfg.n_fft; ++n) env[t * cfg.hop + n] += win[n] * win[n];
  return env;
}

template <typename T>
ad::Tensor<T> stft_forward(const T* x, std::size_t len, const StftConfig& cfg) {
  const std::size_t frames = cfg.frames(len), bins = cfg.bins(), nfft = cfg.n_fft;
  const long pad = static_cast<long>(cfg.pad());
  const auto win = window<T>(cfg);
  auto& fft = RealFft<T>::cached(nfft);
  ad::Tensor<T> out(ad::Shape{frames, bins, 2});
  std::vector<T> buf(nfft);
  std::vector<std::complex<T>> spec(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * cfg.hop);
    for (std::size_t n = 0; n < nfft; ++n) buf[n] = win[n] * x[reflect_index(start + static_cast<long>(n), pad, len)];
    fft.forward(buf.data(), spec.data());
    T* dst = out.data() + t * bins * 2;
    for (std::size_t k = 0; k < bins; ++k) {
      dst[2 * k] = spec[k].real();
      dst[2 * k + 1] = spec[k].imag();
    }
  }
  return out;
}

/// Adjoint of stft_forward: gx += J^T g.
template <typename T>
void stft_adjoint(const T* g, std::size_t len, const StftConfig& cfg, T* gx) {
  const std::size_t frames = cfg.frames(len), bins = cfg.bins(), nfft = cfg.n_fft;
  const long pad = static_cast<long>(cfg.pad());
  const auto win = window<T>(cfg);
  auto& fft = RealFft<T>::cached(nfft);
  std::vector<std::complex<T>> spec(bins);
  std::vector<T> buf(nfft);
  for (std::size_t t = 0; t < frames; ++t) {
    const T* src = g + t * bins * 2;
    // d/dx_n of sum_k (gRe_k Re X_k + gIm_k Im X_k) = Re sum_k G_k e^{+i theta}.
    // The c2r transform doubles interior bins, so DC and Nyquist are doubled
    // here and the result halved.
    for (std::size_t k = 0; k < bins; ++k) spec[k] = {src[2 * k], src[2 * k + 1]};
    spec[0] *= T(2);
    spec[bins - 1] *= T(2);
    fft.inverse(spec.data(), buf.data());
    const long start = static_cast<long>(t * cfg.hop);
    for (std::size_t n = 0; n < nfft; ++n)
      gx[reflect_index(start + static_cast<long>(n), pad, len)] += T(0.5) * buf[n] * win[n];
  }
}

template <typename T>
std::vector<T> istft_forward(const T* spec, std::size_t frames, std::size_t len, const StftConfig& cfg) {
  const std::size_t bins = cfg.bins(), nfft = cfg.n_fft, pad = cfg.pad();
  const auto win = window<T>(cfg);
  const auto env = window_envelope(cfg, frames, win);
  auto& fft = RealFft<T>::cached(nfft);
  std::vector<T> acc(env.size(), T(0)), buf(nfft);
  std::vector<std::complex<T>> c(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const T* src = spec + t * bins * 2;
    for (std::size_t k = 0; k < bins; ++k) c[k] = {src[2 * k], src[2 * k + 1]};
    fft.inverse(c.data(), buf.data());
    for (std::size_t n = 0; n < nfft; ++n) acc[t * cfg.hop + n] += buf[n] * win[n] / static_cast<T>(nfft);
  }
  std::vector<T> out(len, T(0));
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t p = i + pad;
    if (p < acc.size() && env[p] > T(1e-11)) out[i] = acc[p] / env[p];
  }
  return out;
}

/// Adjoint of istft_forward with respect to the complex frames.
template <typename T>
void istft_adjoint(const T* gy, std::size_t frames, std::size_t len, const StftConfig& cfg, T* gspec) {
  const std::size_t bins = cfg.bins(), nfft = cfg.n_fft, pad = cfg.pad();
  const auto win = window<T>(cfg);
  const auto env = window_envelope(cfg, frames, win);
  auto& fft = RealFft<T>::cached(nfft);
  std::vector<T> gacc(env.size(), T(0)), buf(nfft);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t p = i + pad;
    if (p < gacc.size() && env[p] > T(1e-11)) gacc[p] = gy[i] / env[p];
  }
  std::vector<std::complex<T>> c(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t n = 0; n < nfft; ++n) buf[n] = gacc[t * cfg.hop + n] * win[n] / static_cast<T>(nfft);
    fft.forward(buf.data(), c.data());
    T* dst = gspec + t * bins * 2;
    for (std::size_t k = 0; k < bins; ++k) {
      const T weight = (k == 0 || k == bins - 1) ? T(1) : T(2);
      dst[2 * k] += weight * c[k].real();
      dst[2 * k + 1] += weight * c[k].imag();
    }
  }
}

}  // namespace kernels

/// Audio (N) -> complex spectrogram (frames x bins x 2).
template <typename T>
ad::Var<T> stft(const ad::Var<T>& x, const StftConfig& cfg) {
  ad::detail::require(x.shape().size() == 1 && x.size() >= 1, "stft: input must be a non-empty 1-D signal");
  const std::size_t len = x.size();
  return ad::make_result<T>(kernels::stft_forward(x.value().data(), len, cfg), {x}, [cfg, len](ad::Node<T>& n) {
    if (ad::Tensor<T>* g = n.parent_grad(0)) kernels::stft_adjoint(n.grad.data(), len, cfg, g->data());
  });
}

/// Complex spectrogram -> audio of `length` samples (real part of the
/// overlap-added inverse, normalized by the squared-window envelope).
template <typename T>
ad::Var<T> istft(const ad::Var<T>& spec, const StftConfig& cfg, std::size_t length) {
  const auto& s = spec.shape();
  ad::detail::require(s.size() == 3 && s[1] == cfg.bins() && s[2] == 2 && s[0] >= 1,
                      "istft: expected frames x " + std::to_string(cfg.bins()) + " x 2, got " + ad::shape_str(s));
  const std::size_t frames = s[0];
  auto y = kernels::istft_forward(spec.value().data(), frames, length, cfg);
  return ad::make_result<T>(ad::Tensor<T>(ad::Shape{length}, std::move(y)), {spec},
                            [cfg, frames, length](ad::Node<T>& n) {
                              if (ad::Tensor<T>* g = n.parent_grad(0))
                                kernels::istft_adjoint(n.grad.data(), frames, length, cfg, g->data());
                            });
}

/// |X|: frames x bins x 2 -> frames x bins. The subgradient at 0 is 0.
template <typename T>
ad::Var<T> magnitude(const ad::Var<T>& spec) {
  const auto& s = spec.shape();
  ad::detail::require(s.size() == 3 && s[2] == 2, "magnitude: expected frames x bins x 2");
  ad::Tensor<T> out(ad::Shape{s[0], s[1]});
  const T* v = spec.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(v[2 * i], v[2 * i + 1]);
  return ad::make_result<T>(std::move(out), {spec}, [](ad::Node<T>& n) {
    ad::Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    const T* v = n.parent_value(0).data();
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      const T r = n.value[i];
      if (r <= T(0)) continue;
      (*g)[2 * i] += n.grad[i] * v[2 * i] / r;
      (*g)[2 * i + 1] += n.grad[i] * v[2 * i + 1] / r;
    }
  });
}

/// Builds mag * exp(i phase) with a constant phase (given as cos and sin).
template <typename T>
ad::Var<T> with_phase(const ad::Var<T>& mag, const ad::Tensor<T>& cos_p, const ad::Tensor<T>& sin_p) {
  const auto& s = mag.shape();
  ad::detail::require(s.size() == 2 && cos_p.shape() == s && sin_p.shape() == s,
                      "with_phase: magnitude " + ad::shape_str(s) + " vs phase " + ad::shape_str(cos_p.shape()));
  ad::Tensor<T> out(ad::Shape{s[0], s[1], 2});
  for (std::size_t i = 0; i < mag.size(); ++i) {
    out[2 * i] = mag.value()[i] * cos_p[i];
    out[2 * i + 1] = mag.value()[i] * sin_p[i];
  }
  return ad::make_result<T>(std::move(out), {mag}, [cos_p, sin_p](ad::Node<T>& n) {
    ad::Tensor<T>* g = n.parent_grad(0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[2 * i] * cos_p[i] + n.grad[2 * i + 1] * sin_p[i];
  });
}

/// Griffin-Lim magnitude replacement: target * X / |X|. Where |X| is zero the
/// phase is taken as 0.
template <typename T>
ad::Var<T> project_magnitude(const ad::Var<T>& target, const ad::Var<T>& spec) {
  const auto& s = spec.shape();
  ad::detail::require(s.size() == 3 && s[2] == 2 && target.shape() == ad::Shape{s[0], s[1]},
                      "project_magnitude: target " + ad::shape_str(target.shape()) + " vs " + ad::shape_str(s));
  ad::Tensor<T> out(s);
  const T* v = spec.value().data();
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T r = std::hypot(v[2 * i], v[2 * i + 1]);
    const T m = target.value()[i];
    if (r > T(0)) {
      out[2 * i] = m * v[2 * i] / r;
      out[2 * i + 1] = m * v[2 * i + 1] / r;
    } else {
      out[2 * i] = m;
    }
  }
  return ad::make_result<T>(std::move(out), {target, spec}, [](ad::Node<T>& n) {
    ad::Tensor<T>* gt = n.parent_grad(0);
    ad::Tensor<T>* gs = n.parent_grad(1);
    const T* v = n.parent_value(1).data();
    const T* m = n.parent_value(0).data();
    for (std::size_t i = 0; i < n.parent_value(0).size(); ++i) {
      const T re = v[2 * i], im = v[2 * i + 1];
      const T r = std::hypot(re, im);
      const T g_re = n.grad[2 * i], g_im = n.grad[2 * i + 1];
      if (r <= T(0)) {
        if (gt) (*gt)[i] += g_re;
        continue;
      }
      const T cr = re / r, sr = im / r;
      if (gt) (*gt)[i] += g_re * cr + g_im * sr;
      if (gs) {
        // d(re/r)/dre = im^2/r^3, d(re/r)/dim = -re im/r^3, and symmetrically.
        const T k = m[i] / r;
        const T cross = g_re * sr - g_im * cr;  // component along the tangent
        (*gs)[2 * i] += k * cross * sr;
        (*gs)[2 * i + 1] -= k * cross * cr;
      }
    }
  });
}

/// Griffin-Lim from a linear magnitude target (frames x bins), zero initial
/// phase. Returns audio of `length` samples.
template <typename T>
ad::Var<T> griffin_lim(const ad::Var<T>& target, const StftConfig& cfg, std::size_t iters, std::size_t length,
                       std::vector<double>* convergence = nullptr) {
  const auto& s = target.shape();
  ad::detail::require(s.size() == 2 && s[1] == cfg.bins(), "griffin_lim: target must be frames x bins");
  ad::Tensor<T> zeros(s), ones(s, T(1));
  ad::Var<T> spec = with_phase(target, ones, zeros);
  double target_norm = 0.0;
  if (convergence) {
    for (T v : target.value().values()) target_norm += static_cast<double>(v) * v;
    target_norm = std::sqrt(target_norm);
  }
  auto record = [&](const ad::Var<T>& audio) {
    if (!convergence) return;
    const auto mag = kernels::stft_forward(audio.value().data(), length, cfg);
    double d = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double e = std::hypot(static_cast<double>(mag[2 * i]), static_cast<double>(mag[2 * i + 1])) -
                       static_cast<double>(target.value()[i]);
      d += e * e;
    }
    convergence->push_back(target_norm > 0.0 ? std::sqrt(d) / target_norm : 0.0);
  };
  for (std::size_t k = 0; k < iters; ++k) {
    const ad::Var<T> audio = istft(spec, cfg, length);
    record(audio);
    spec = project_magnitude(target, stft(audio, cfg));
  }
  ad::Var<T> out = istft(spec, cfg, length);
  record(out);
  return out;
}

/// Mel basis with its cached pseudo-inverse, in the working precision.
template <typename T>
struct MelBasis {
  ad::Tensor<T> filters;  // n_mels x bins
  ad::Tensor<T> inverse;  // bins x n_mels

  MelBasis() = default;
  MelBasis(const Matrix& fb) : filters(fb.cast<T>()), inverse(pseudo_inverse(fb).cast<T>()) {}
};

template <typename T>
ad::Var<T> mel(const ad::Var<T>& magnitude, const MelBasis<T>& basis) {
  return ad::matmul_const(magnitude, basis.filters);
}

template <typename T>
ad::Var<T> mel_inverse(const ad::Var<T>& mel_spec, const MelBasis<T>& basis) {
  return ad::relu(ad::matmul_const(mel_spec, basis.inverse));
}

}  // namespace twm::dsp
