#include "twm/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "twm/rng.hpp"

namespace twm::distortion {

namespace {

struct KindName {
  Kind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {Kind::none, "none"},
    {Kind::dp_pipeline, "dp_pipeline"},
    {Kind::normalize, "normalize"},
    {Kind::resample, "resample"},
    {Kind::amplitude_scale, "amplitude_scale"},
    {Kind::requantize, "requantize"},
    {Kind::median_filter, "median_filter"},
    {Kind::low_pass, "low_pass"},
    {Kind::high_pass, "high_pass"},
    {Kind::gaussian_noise, "gaussian_noise"},
    {Kind::crop, "crop"},
    {Kind::band_mask, "band_mask"},
};

[[noreturn]] void bad(const std::string& what) { throw std::invalid_argument(what); }

double to_double(const std::string& s, const std::string& ctx) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    bad(ctx + ": '" + s + "' is not a number");
  }
  if (used != s.size()) bad(ctx + ": '" + s + "' is not a number");
  return v;
}

long to_long(const std::string& s, const std::string& ctx) {
  const double v = to_double(s, ctx);
  if (v != std::floor(v)) bad(ctx + ": '" + s + "' is not an integer");
  return static_cast<long>(v);
}

CropPosition parse_position(const std::string& s) {
  if (s == "front") return CropPosition::front;
  if (s == "middle") return CropPosition::middle;
  if (s == "behind" || s == "back") return CropPosition::behind;
  bad("crop position must be front, middle or behind, got '" + s + "'");
}

std::vector<double> lowpass_taps(double cutoff_hz, int sample_rate) {
  const double fc = cutoff_hz / sample_rate;
  const std::size_t n = kFilterTaps;
  const double mid = (n - 1) / 2.0;
  std::vector<double> h(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i - mid;
    const double sinc = t == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * t) / (std::numbers::pi * t);
    const double w = 0.42 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1)) +
                     0.08 * std::cos(4.0 * std::numbers::pi * i / (n - 1));  // Blackman
    h[i] = sinc * w;
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

// Centered (zero-phase) convolution with zero extension.
std::vector<double> filter_centered(const std::vector<double>& x, const std::vector<double>& h) {
  const long n = static_cast<long>(x.size()), half = static_cast<long>(h.size() / 2);
  std::vector<double> y(x.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long k = 0; k < static_cast<long>(h.size()); ++k) {
      const long j = i + half - k;
      if (j >= 0 && j < n) acc += h[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

AudioClip median(const AudioClip& clip, std::size_t k) {
  const long n = static_cast<long>(clip.size()), half = static_cast<long>(k / 2);
  AudioClip out{std::vector<double>(clip.size()), clip.sample_rate};
  std::vector<double> win(k);
  for (long i = 0; i < n; ++i) {
    for (long j = -half; j <= half; ++j)
      win[static_cast<std::size_t>(j + half)] = clip.samples[static_cast<std::size_t>(std::clamp(i + j, 0L, n - 1))];
    std::nth_element(win.begin(), win.begin() + half, win.end());
    out.samples[static_cast<std::size_t>(i)] = win[static_cast<std::size_t>(half)];
  }
  return out;
}

AudioClip add_noise(const AudioClip& clip, double snr_db, std::uint64_t seed) {
  double signal = 0.0;
  for (double v : clip.samples) signal += v * v;
  if (!(signal > 0.0)) bad("gaussian_noise: reference clip has zero energy");
  Rng rng(seed);
  std::vector<double> noise(clip.size());
  double energy = 0.0;
  for (double& v : noise) {
    v = rng.normal();
    energy += v * v;
  }
  const double gain = std::sqrt(signal / (energy * std::pow(10.0, snr_db / 10.0)));
  AudioClip out = clip;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += gain * noise[i];
  return out;
}

AudioClip crop(const AudioClip& clip, double ratio, CropPosition pos, const dsp::StftConfig& cfg) {
  const std::size_t n = clip.size();
  const auto removed = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  const std::size_t kept = n - std::min(removed, n);
  if (kept == 0 || cfg.frames(kept) == 0)
    bad("crop leaves " + std::to_string(kept) + " samples, not enough for one STFT frame");
  std::size_t begin = 0;
  switch (pos) {
    case CropPosition::front: begin = removed; break;
    case CropPosition::behind: begin = 0; break;
    case CropPosition::middle: {
      // Drop a centered block; keep the head and tail.
      const std::size_t cut = (n - removed) / 2;
      AudioClip out{std::vector<double>(clip.samples.begin(), clip.samples.begin() + static_cast<std::ptrdiff_t>(cut)),
                    clip.sample_rate};
      out.samples.insert(out.samples.end(), clip.samples.begin() + static_cast<std::ptrdiff_t>(cut + removed),
                         clip.samples.end());
      return out;
    }
  }
  return AudioClip{std::vector<double>(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                       clip.samples.begin() + static_cast<std::ptrdiff_t>(begin + kept)),
                   clip.sample_rate};
}

AudioClip band_mask(const AudioClip& clip, double start, double width) {
  dsp::Spectrogram spec = dsp::stft(clip);
  mask_band(spec, start, width);
  AudioClip out = dsp::istft(spec);
  out.sample_rate = clip.sample_rate;
  return out;
}

AudioClip dp_eval(const AudioClip& clip, std::size_t iters) {
  const dsp::StftConfig cfg;
  const dsp::MelBasis<double> basis(dsp::mel_filterbank({}, cfg.n_fft, clip.sample_rate));
  const ad::Var<double> x = ad::constant(ad::Tensor<double>(ad::Shape{clip.size()}, clip.samples));
  const ad::Var<double> y = dp_train(x, basis, cfg, iters);
  return AudioClip{y.value().storage(), clip.sample_rate};
}

}  // namespace

const char* kind_name(Kind k) {
  for (const auto& e : kKinds)
    if (e.kind == k) return e.name;
  return "?";
}

const char* position_name(CropPosition p) {
  switch (p) {
    case CropPosition::front: return "front";
    case CropPosition::middle: return "middle";
    case CropPosition::behind: return "behind";
  }
  return "?";
}

void DistortionSpec::validate() const {
  switch (kind) {
    case Kind::none:
    case Kind::normalize: break;
    case Kind::dp_pipeline:
      if (gl_iters < 1) bad("dp_pipeline: Griffin-Lim iterations must be >= 1");
      break;
    case Kind::resample:
      if (rate <= 0) bad("resample: rate must be positive");
      break;
    case Kind::amplitude_scale:
      if (!(p > 0.0 && p <= 1.0)) bad("amplitude_scale: p must be in (0, 1]");
      break;
    case Kind::requantize:
      if (bits < 2 || bits > 16) bad("requantize: bits must be in [2, 16]");
      break;
    case Kind::median_filter:
      if (k < 1 || k % 2 == 0) bad("median_filter: k must be odd");
      break;
    case Kind::low_pass:
    case Kind::high_pass:
      if (!(cutoff_hz > 0.0)) bad(std::string(kind_name(kind)) + ": cutoff must be positive");
      break;
    case Kind::gaussian_noise:
      if (!std::isfinite(snr_db)) bad("gaussian_noise: target SNR must be finite");
      break;
    case Kind::crop:
      if (!(ratio > 0.0 && ratio < 1.0)) bad("crop: ratio must be in (0, 1)");
      break;
    case Kind::band_mask:
      if (!(start >= 0.0 && width >= 0.0 && start + width <= 1.0 + 1e-12))
        bad("band_mask: need 0 <= start, 0 <= width, start + width <= 1");
      break;
  }
}

DistortionSpec DistortionSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty() || parts[0].empty()) bad("empty distortion spec");
  DistortionSpec s;
  bool found = false;
  for (const auto& e : kKinds)
    if (parts[0] == e.name) {
      s.kind = e.kind;
      found = true;
    }
  if (!found) bad("unknown distortion kind '" + parts[0] + "'");
  std::vector<std::string> args;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].rfind("seed=", 0) == 0)
      s.seed = static_cast<std::uint64_t>(to_long(parts[i].substr(5), text));
    else
      args.push_back(parts[i]);
  }
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi)
      bad("distortion '" + text + "': " + parts[0] + " takes " + std::to_string(lo) +
          (lo == hi ? "" : "-" + std::to_string(hi)) + " argument(s)");
  };
  switch (s.kind) {
    case Kind::none:
    case Kind::normalize: need(0, 0); break;
    case Kind::dp_pipeline:
      need(0, 1);
      if (!args.empty()) s.gl_iters = static_cast<std::size_t>(to_long(args[0], text));
      break;
    case Kind::resample: need(1, 1); s.rate = static_cast<int>(to_long(args[0], text)); break;
    case Kind::amplitude_scale: need(1, 1); s.p = to_double(args[0], text); break;
    case Kind::requantize: need(1, 1); s.bits = static_cast<int>(to_long(args[0], text)); break;
    case Kind::median_filter: need(1, 1); s.k = static_cast<std::size_t>(to_long(args[0], text)); break;
    case Kind::low_pass:
    case Kind::high_pass: need(1, 1); s.cutoff_hz = to_double(args[0], text); break;
    case Kind::gaussian_noise: need(1, 1); s.snr_db = to_double(args[0], text); break;
    case Kind::crop:
      need(1, 2);
      s.ratio = to_double(args[0], text);
      if (args.size() > 1) s.position = parse_position(args[1]);
      break;
    case Kind::band_mask:
      need(2, 2);
      s.start = to_double(args[0], text);
      s.width = to_double(args[1], text);
      break;
  }
  s.validate();
  return s;
}

std::string DistortionSpec::str() const {
  std::ostringstream os;
  os << kind_name(kind);
  switch (kind) {
    case Kind::none:
    case Kind::normalize: break;
    case Kind::dp_pipeline: os << ':' << gl_iters; break;
    case Kind::resample: os << ':' << rate; break;
    case Kind::amplitude_scale: os << ':' << p; break;
    case Kind::requantize: os << ':' << bits; break;
    case Kind::median_filter: os << ':' << k; break;
    case Kind::low_pass:
    case Kind::high_pass: os << ':' << cutoff_hz; break;
    case Kind::gaussian_noise: os << ':' << snr_db << ":seed=" << seed; break;
    case Kind::crop: os << ':' << ratio << ':' << position_name(position); break;
    case Kind::band_mask: os << ':' << start << ':' << width; break;
  }
  return os.str();
}

DistortionSpec DistortionSpec::amplitude(double p) {
  DistortionSpec s;
  s.kind = Kind::amplitude_scale;
  s.p = p;
  return s;
}

DistortionSpec DistortionSpec::noise(double snr_db, std::uint64_t seed) {
  DistortionSpec s;
  s.kind = Kind::gaussian_noise;
  s.snr_db = snr_db;
  s.seed = seed;
  return s;
}

DistortionSpec DistortionSpec::cropping(double ratio, CropPosition pos) {
  DistortionSpec s;
  s.kind = Kind::crop;
  s.ratio = ratio;
  s.position = pos;
  return s;
}

DistortionSpec DistortionSpec::mask(double start, double width) {
  DistortionSpec s;
  s.kind = Kind::band_mask;
  s.start = start;
  s.width = width;
  return s;
}

DistortionSpec DistortionSpec::dp(std::size_t iters) {
  DistortionSpec s;
  s.kind = Kind::dp_pipeline;
  s.gl_iters = iters;
  return s;
}

void mask_band(dsp::Spectrogram& spec, double start, double width) {
  const std::size_t bins = spec.config.bins();
  const auto lo = std::min(bins, static_cast<std::size_t>(std::floor(start * bins)));
  const auto hi = std::min(bins, static_cast<std::size_t>(std::floor((start + width) * bins)));
  for (std::size_t t = 0; t < spec.frames(); ++t)
    for (std::size_t k = lo; k < hi; ++k) spec.magnitude[t * bins + k] = 0.0;
}

AudioClip apply(const AudioClip& clip, const DistortionSpec& spec) {
  spec.validate();
  if (clip.empty()) bad("cannot distort an empty clip");
  switch (spec.kind) {
    case Kind::none: return clip;
    case Kind::dp_pipeline: return dp_eval(clip, spec.gl_iters);
    case Kind::normalize: {
      double peak = 0.0;
      for (double v : clip.samples) peak = std::max(peak, std::abs(v));
      if (!(peak > 0.0)) bad("normalize: all-zero clip");
      AudioClip out = clip;
      for (double& v : out.samples) v /= peak;
      return out;
    }
    case Kind::resample: {
      AudioClip out = resample(resample(clip, spec.rate), clip.sample_rate);
      return out;
    }
    case Kind::amplitude_scale: {
      AudioClip out = clip;
      for (double& v : out.samples) v *= spec.p;
      return out;
    }
    case Kind::requantize: {
      const double q = std::ldexp(1.0, spec.bits - 1);
      AudioClip out = clip;
      for (double& v : out.samples) v = std::clamp(std::round(v * q), -q, q - 1.0) / q;
      return out;
    }
    case Kind::median_filter: return median(clip, spec.k);
    case Kind::low_pass:
    case Kind::high_pass: {
      if (spec.cutoff_hz >= clip.sample_rate / 2.0) bad("filter cutoff must be below the Nyquist frequency");
      const auto h = lowpass_taps(spec.cutoff_hz, clip.sample_rate);
      AudioClip out{filter_centered(clip.samples, h), clip.sample_rate};
      if (spec.kind == Kind::high_pass)
        for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] = clip.samples[i] - out.samples[i];
      return out;
    }
    case Kind::gaussian_noise: return add_noise(clip, spec.snr_db, spec.seed);
    case Kind::crop: return crop(clip, spec.ratio, spec.position, dsp::StftConfig{});
    case Kind::band_mask: return band_mask(clip, spec.start, spec.width);
  }
  return clip;
}

}  // namespace twm::distortion
