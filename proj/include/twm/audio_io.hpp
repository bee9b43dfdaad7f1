#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace twm {

/// Mono audio. Samples are nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 22050;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
};

/// Reads a 16-bit PCM RIFF/WAVE file. Stereo is averaged to mono and an
/// integer sample v maps to v / 32768.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1] and stored as
/// round(x * 32767).
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

/// PCM16 value write_wav stores for amplitude x.
std::int16_t quantize_pcm16(double x) noexcept;

/// Kaiser-windowed sinc resampler with 64 taps per output sample.
/// Output length is round(N * target / source).
AudioClip resample(const AudioClip& clip, int target_rate);

/// Deterministic harmonic "speech-like" test signal, peak-normalized to 0.8.
AudioClip synth_test_signal(std::uint64_t seed, double duration_s, int sample_rate = 22050);

}  // namespace twm
