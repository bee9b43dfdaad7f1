#pragma once

#include <cstdint>
#include <string>

#include "twm/audio_io.hpp"
#include "twm/dsp_graph.hpp"

namespace twm::distortion {

enum class Kind {
  none,
  dp_pipeline,
  normalize,
  resample,
  amplitude_scale,
  requantize,
  median_filter,
  low_pass,
  high_pass,
  gaussian_noise,
  crop,
  band_mask,
};

enum class CropPosition { front, middle, behind };

/// One evaluation distortion. Only the fields of the selected kind are read.
struct DistortionSpec {
  Kind kind = Kind::none;
  int rate = 16000;              // resample
  double p = 1.0;                // amplitude_scale
  int bits = 8;                  // requantize
  std::size_t k = 3;             // median_filter
  double cutoff_hz = 4000.0;     // low_pass / high_pass
  double snr_db = 20.0;          // gaussian_noise
  double ratio = 0.5;            // crop
  CropPosition position = CropPosition::front;
  double start = 0.0;            // band_mask, fraction of bins
  double width = 0.1;            // band_mask
  std::size_t gl_iters = 32;     // dp_pipeline
  std::uint64_t seed = 0;        // gaussian_noise

  /// Throws std::invalid_argument when a parameter is out of range.
  void validate() const;

  /// Grammar: kind[:arg]...[:seed=N], e.g. "amplitude_scale:0.2", "crop:0.9:middle",
  /// "band_mask:0.1:0.1", "gaussian_noise:25:seed=3", "dp_pipeline:32".
  static DistortionSpec parse(const std::string& text);
  std::string str() const;

  static DistortionSpec amplitude(double p);
  static DistortionSpec noise(double snr_db, std::uint64_t seed = 0);
  static DistortionSpec cropping(double ratio, CropPosition pos);
  static DistortionSpec mask(double start, double width);
  static DistortionSpec dp(std::size_t iters = 32);
};

const char* kind_name(Kind k);
const char* position_name(CropPosition p);

/// Evaluation-time distortion (not differentiable).
AudioClip apply(const AudioClip& clip, const DistortionSpec& spec);

/// Zeroes magnitude bins [floor(start * F), floor((start + width) * F)) in every frame.
void mask_band(dsp::Spectrogram& spec, double start, double width);

/// Number of taps of the low/high-pass FIR filters.
inline constexpr std::size_t kFilterTaps = 255;

/// Lowest-index argmax-routed peak normalization; throws on an all-zero clip.
template <typename T>
ad::Var<T> peak_normalize(const ad::Var<T>& audio) {
  const ad::Var<T> peak = ad::abs_max(audio);
  if (!(peak.value().item() > T(0))) throw std::invalid_argument("peak normalization of an all-zero clip");
  return ad::div_scalar(audio, peak);
}

/// Differentiable training distortion: normalize -> mel -> Griffin-Lim (K iterations).
template <typename T>
ad::Var<T> dp_train(const ad::Var<T>& audio, const dsp::MelBasis<T>& basis, const dsp::StftConfig& cfg,
                    std::size_t iters) {
  const ad::Var<T> normalized = peak_normalize(audio);
  const ad::Var<T> mel = dsp::mel(dsp::magnitude(dsp::stft(normalized, cfg)), basis);
  return dsp::griffin_lim(dsp::mel_inverse(mel, basis), cfg, iters, audio.size());
}

}  // namespace twm::distortion
