#pragma once

#include <cstddef>
#include <vector>

#include "twm/ad/tensor.hpp"
#include "twm/audio_io.hpp"

namespace twm::dsp {

using Matrix = ad::Tensor<double>;

/// Periodic Hann window, reflect center padding of n_fft / 2.
struct StftConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t win_len = 1024;
  bool center = true;

  std::size_t bins() const noexcept { return n_fft / 2 + 1; }
  std::size_t pad() const noexcept { return center ? n_fft / 2 : 0; }
  /// Frame count for a signal of n samples: 1 + floor((n + 2 pad - n_fft) / hop).
  std::size_t frames(std::size_t n) const;
  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

/// Window of length n_fft (win_len Hann samples centered, zeros elsewhere).
std::vector<double> analysis_window(const StftConfig& cfg);

/// Magnitude and phase, both frames x bins.
struct Spectrogram {
  Matrix magnitude;
  Matrix phase;
  StftConfig config;
  std::size_t length = 0;  // samples of the analysed signal
  int sample_rate = 22050;

  std::size_t frames() const { return magnitude.empty() ? 0 : magnitude.dim(0); }
};

struct MelConfig {
  std::size_t n_mels = 80;
  double f_min = 0.0;
  double f_max = -1.0;  // <= 0 selects sample_rate / 2
  bool operator==(const MelConfig&) const = default;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg = {});
AudioClip istft(const Spectrogram& spec);

/// HTK-scale triangular filters, each peak-normalized to 1. n_mels x bins.
Matrix mel_filterbank(const MelConfig& cfg, std::size_t n_fft, int sample_rate);

/// Least-squares pseudo-inverse of a filterbank, bins x n_mels.
Matrix pseudo_inverse(const Matrix& fb);

/// magnitude (T x F) times fb transposed.
Matrix mel_spectrogram(const Matrix& magnitude, const Matrix& fb);

/// Per-frame least-squares inversion, negatives clamped to zero.
Matrix mel_inverse(const Matrix& mel, const Matrix& fb);

/// Zero-phase-initialized Griffin-Lim from a mel spectrogram. When
/// `convergence` is given, it receives || |STFT(x_k)| - target || / ||target||
/// for every iterate x_k, k = 0..iters.
AudioClip griffin_lim(const Matrix& mel, const Matrix& fb, const StftConfig& cfg, std::size_t iters,
                      std::size_t length, int sample_rate, std::vector<double>* convergence = nullptr);

}  // namespace twm::dsp
