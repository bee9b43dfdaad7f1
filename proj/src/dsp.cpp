#include "twm/dsp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "twm/dsp_graph.hpp"

namespace twm::dsp {

std::size_t StftConfig::frames(std::size_t n) const {
  const std::size_t padded = n + 2 * pad();
  if (padded < n_fft) return 0;
  return 1 + (padded - n_fft) / hop;
}

void StftConfig::validate() const {
  if (n_fft < 2 || n_fft % 2 != 0) throw std::invalid_argument("StftConfig: n_fft must be even and >= 2");
  if (hop == 0 || hop > n_fft) throw std::invalid_argument("StftConfig: hop must be in [1, n_fft]");
  if (win_len == 0 || win_len > n_fft) throw std::invalid_argument("StftConfig: win_len must be in [1, n_fft]");
}

std::vector<double> analysis_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.n_fft, 0.0);
  const std::size_t offset = (cfg.n_fft - cfg.win_len) / 2;
  for (std::size_t i = 0; i < cfg.win_len; ++i)
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / cfg.win_len);
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  cfg.validate();
  if (clip.empty()) throw std::invalid_argument("stft: empty clip has no frames");
  const auto spec = kernels::stft_forward(clip.samples.data(), clip.size(), cfg);
  const std::size_t frames = spec.dim(0), bins = spec.dim(1);
  Spectrogram out;
  out.magnitude = Matrix(ad::Shape{frames, bins});
  out.phase = Matrix(ad::Shape{frames, bins});
  for (std::size_t i = 0; i < frames * bins; ++i) {
    const double re = spec[2 * i], im = spec[2 * i + 1];
    out.magnitude[i] = std::hypot(re, im);
    double p = std::atan2(im, re);
    if (p <= -std::numbers::pi) p = std::numbers::pi;
    out.phase[i] = p;
  }
  out.config = cfg;
  out.length = clip.size();
  out.sample_rate = clip.sample_rate;
  return out;
}

AudioClip istft(const Spectrogram& spec) {
  if (spec.magnitude.shape() != spec.phase.shape() || spec.magnitude.rank() != 2 ||
      spec.magnitude.dim(1) != spec.config.bins())
    throw ShapeError("istft: magnitude " + ad::shape_str(spec.magnitude.shape()) + " and phase " +
                     ad::shape_str(spec.phase.shape()) + " disagree with the STFT config");
  const std::size_t frames = spec.magnitude.dim(0);
  if (frames == 0) throw ShapeError("istft: no frames");
  std::size_t length = spec.length;
  if (length == 0) length = (frames - 1) * spec.config.hop;
  ad::Tensor<double> complex_frames(ad::Shape{frames, spec.config.bins(), 2});
  for (std::size_t i = 0; i < spec.magnitude.size(); ++i) {
    complex_frames[2 * i] = spec.magnitude[i] * std::cos(spec.phase[i]);
    complex_frames[2 * i + 1] = spec.magnitude[i] * std::sin(spec.phase[i]);
  }
  AudioClip out;
  out.sample_rate = spec.sample_rate;
  out.samples = kernels::istft_forward(complex_frames.data(), frames, length, spec.config);
  return out;
}

Matrix mel_filterbank(const MelConfig& cfg, std::size_t n_fft, int sample_rate) {
  if (cfg.n_mels < 1) throw std::invalid_argument("mel_filterbank: n_mels must be >= 1");
  if (sample_rate <= 0) throw std::invalid_argument("mel_filterbank: sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  const double f_max = cfg.f_max > 0.0 ? cfg.f_max : nyquist;
  if (!(cfg.f_min >= 0.0 && cfg.f_min < f_max && f_max <= nyquist))
    throw std::invalid_argument("mel_filterbank: need 0 <= f_min < f_max <= sample_rate / 2");
  const std::size_t bins = n_fft / 2 + 1;
  const double m_lo = hz_to_mel(cfg.f_min), m_hi = hz_to_mel(f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  Matrix fb(ad::Shape{cfg.n_mels, bins});
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    double peak = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      const double v = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      fb[m * bins + k] = v;
      peak = std::max(peak, v);
    }
    if (peak <= 0.0)
      throw std::invalid_argument("mel_filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; n_mels too large for n_fft");
    for (std::size_t k = 0; k < bins; ++k) fb[m * bins + k] /= peak;
  }
  return fb;
}

Matrix pseudo_inverse(const Matrix& fb) {
  if (fb.rank() != 2) throw ShapeError("pseudo_inverse: expected a matrix");
  const auto rows = static_cast<Eigen::Index>(fb.dim(0)), cols = static_cast<Eigen::Index>(fb.dim(1));
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(fb.data(), rows, cols);
  const Eigen::MatrixXd pinv = a.completeOrthogonalDecomposition().pseudoInverse();
  Matrix out(ad::Shape{fb.dim(1), fb.dim(0)});
  for (Eigen::Index i = 0; i < cols; ++i)
    for (Eigen::Index j = 0; j < rows; ++j) out[static_cast<std::size_t>(i * rows + j)] = pinv(i, j);
  return out;
}

Matrix mel_spectrogram(const Matrix& magnitude, const Matrix& fb) {
  if (magnitude.rank() != 2 || fb.rank() != 2 || magnitude.dim(1) != fb.dim(1))
    throw ShapeError("mel_spectrogram: magnitude " + ad::shape_str(magnitude.shape()) + " vs filterbank " +
                     ad::shape_str(fb.shape()));
  return ad::matmul_const(ad::constant(magnitude), fb).value();
}

Matrix mel_inverse(const Matrix& mel, const Matrix& fb) {
  if (mel.rank() != 2 || fb.rank() != 2 || mel.dim(1) != fb.dim(0))
    throw ShapeError("mel_inverse: mel " + ad::shape_str(mel.shape()) + " vs filterbank " +
                     ad::shape_str(fb.shape()));
  const MelBasis<double> basis(fb);
  return dsp::mel_inverse(ad::constant(mel), basis).value();
}

AudioClip griffin_lim(const Matrix& mel, const Matrix& fb, const StftConfig& cfg, std::size_t iters,
                      std::size_t length, int sample_rate, std::vector<double>* convergence) {
  cfg.validate();
  if (mel.rank() != 2 || mel.dim(0) != cfg.frames(length))
    throw ShapeError("griffin_lim: mel " + ad::shape_str(mel.shape()) + " does not match " +
                     std::to_string(cfg.frames(length)) + " frames for length " + std::to_string(length));
  const Matrix target = mel_inverse(mel, fb);
  AudioClip out;
  out.sample_rate = sample_rate;
  out.samples = dsp::griffin_lim(ad::constant(target), cfg, iters, length, convergence).value().storage();
  return out;
}

}  // namespace twm::dsp
