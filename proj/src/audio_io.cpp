#include "twm/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "twm/error.hpp"
#include "twm/rng.hpp"

namespace twm {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

// Zeroth-order modified Bessel function of the first kind.
double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

std::size_t mirror_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

constexpr int kTaps = 64;
constexpr double kKaiserBeta = 9.0;

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavErrorKind::missing_file, "cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 12) throw WavError(WavErrorKind::truncated, "truncated RIFF header: " + path.string());
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError(WavErrorKind::bad_container, "not a RIFF/WAVE file: " + path.string());

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > bytes.size())
      throw WavError(WavErrorKind::truncated, "missing data chunk: " + path.string());
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = le32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + 16 > bytes.size())
        throw WavError(WavErrorKind::truncated, "truncated fmt chunk: " + path.string());
      std::uint16_t format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == 0xFFFE && chunk_size >= 40 && body + 40 <= bytes.size())
        format = le16(bytes.data() + body + 24);  // WAVE_FORMAT_EXTENSIBLE sub-format
      if (format != 1) throw WavError(WavErrorKind::unsupported_format, "WAV is not integer PCM: " + path.string());
      if (bits != 16)
        throw WavError(WavErrorKind::unsupported_format,
                       "unsupported bit depth " + std::to_string(bits) + ": " + path.string());
      if (channels != 1 && channels != 2)
        throw WavError(WavErrorKind::unsupported_format,
                       "unsupported channel count " + std::to_string(channels) + ": " + path.string());
      if (rate == 0) throw WavError(WavErrorKind::unsupported_format, "zero sample rate: " + path.string());
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw WavError(WavErrorKind::bad_container, "data chunk before fmt chunk: " + path.string());
      if (body + chunk_size > bytes.size())
        throw WavError(WavErrorKind::truncated, "truncated data chunk: " + path.string());
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t frames = chunk_size / frame_bytes;
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
          const auto v = static_cast<std::int16_t>(le16(bytes.data() + body + f * frame_bytes + 2u * c));
          acc += static_cast<double>(v) / 32768.0;
        }
        clip.samples[f] = acc / channels;
      }
      return clip;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
}

std::int16_t quantize_pcm16(double x) noexcept {
  const double c = std::clamp(x, -1.0, 1.0);
  return static_cast<std::int16_t>(std::lround(c * 32767.0));
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  for (double s : clip.samples)
    if (!std::isfinite(s)) throw std::invalid_argument("write_wav: non-finite sample");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (double s : clip.samples) put16(out, static_cast<std::uint16_t>(quantize_pcm16(s)));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw WavError(WavErrorKind::unwritable, "cannot write WAV file: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw WavError(WavErrorKind::unwritable, "write failed: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target rate must be positive");
  if (clip.sample_rate <= 0) throw std::invalid_argument("resample: source rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  AudioClip out;
  out.sample_rate = target_rate;
  const std::size_t n = clip.size();
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / static_cast<double>(clip.sample_rate)));
  out.samples.assign(n_out, 0.0);
  if (n == 0 || n_out == 0) return out;

  // Output sample m sits at input position m * up / down; the fractional part
  // takes one of `up` values, so one filter per phase is precomputed.
  const long g = std::gcd(clip.sample_rate, target_rate);
  const long up = target_rate / g;
  const long down = clip.sample_rate / g;
  const double cutoff = 0.94 * std::min(1.0, static_cast<double>(target_rate) / clip.sample_rate);
  const double norm_i0 = bessel_i0(kKaiserBeta);
  constexpr int half = kTaps / 2;

  std::map<long, std::array<double, kTaps>> phases;
  auto phase_filter = [&](long phase) -> const std::array<double, kTaps>& {
    auto it = phases.find(phase);
    if (it != phases.end()) return it->second;
    std::array<double, kTaps> h{};
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    double sum = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      // tap k multiplies x[base - half + 1 + k]
      const double u = static_cast<double>(k - half + 1) - frac;
      const double r = u / (half + 0.0);
      const double win = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / norm_i0;
      const double xu = cutoff * u;
      const double sinc = std::abs(xu) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * xu) / (std::numbers::pi * xu);
      h[k] = win * sinc;
      sum += h[k];
    }
    for (double& v : h) v /= sum;
    return phases.emplace(phase, h).first->second;
  };

  for (std::size_t m = 0; m < n_out; ++m) {
    const long pos_num = static_cast<long>(m) * down;  // input position * up
    const long base = pos_num / up;
    const long phase = pos_num % up;
    const auto& h = phase_filter(phase);
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) acc += h[k] * clip.samples[mirror_index(base - half + 1 + k, n)];
    out.samples[m] = acc;
  }
  return out;
}

AudioClip synth_test_signal(std::uint64_t seed, double duration_s, int sample_rate) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("synth_test_signal: duration must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("synth_test_signal: sample rate must be positive");
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double f0 = rng.uniform(80.0, 300.0);
  const int harmonics = static_cast<int>(rng.uniform_int(3, 6));
  std::vector<double> amp(harmonics), phase(harmonics);
  for (int h = 0; h < harmonics; ++h) {
    amp[h] = rng.uniform(0.3, 1.0) / (h + 1);
    phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double env_rate = rng.uniform(0.5, 3.0);
  const double env_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double vib_rate = rng.uniform(3.0, 6.0);
  const double vib_depth = rng.uniform(0.0, 0.02);
  Rng noise = rng.split(1);

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  double inst_phase = 0.0;
  const double dt = 1.0 / sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    const double f = f0 * (1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_rate * t));
    double x = 0.0;
    for (int h = 0; h < harmonics; ++h) x += amp[h] * std::sin((h + 1) * inst_phase + phase[h]);
    inst_phase += 2.0 * std::numbers::pi * f * dt;
    const double env = 0.55 + 0.45 * std::sin(2.0 * std::numbers::pi * env_rate * t + env_phase);
    clip.samples[i] = x * env + 0.005 * noise.normal();
  }
  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : clip.samples) s *= 0.8 / peak;
  return clip;
}

}  // namespace twm
