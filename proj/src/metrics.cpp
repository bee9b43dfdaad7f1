#include "twm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "twm/error.hpp"
#include "twm/rng.hpp"

namespace twm {

WatermarkBits WatermarkBits::from_soft(std::vector<double> soft) {
  WatermarkBits w;
  w.bits.reserve(soft.size());
  for (double v : soft) w.bits.push_back(v >= 0.5 ? 1 : 0);
  w.soft = std::move(soft);
  return w;
}

WatermarkBits WatermarkBits::parse(std::string_view bitstring) {
  if (bitstring.empty()) throw std::invalid_argument("watermark bitstring is empty");
  WatermarkBits w;
  for (char c : bitstring) {
    if (c != '0' && c != '1')
      throw std::invalid_argument("watermark bitstring may contain only '0' and '1': " + std::string(bitstring));
    w.bits.push_back(c == '1' ? 1 : 0);
  }
  return w;
}

WatermarkBits WatermarkBits::from_text(std::string_view text, std::size_t n) {
  if (n == 0) throw std::invalid_argument("watermark length must be >= 1");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a offset basis
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  WatermarkBits w;
  std::uint64_t block = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) block = mix64(h + i / 64);
    w.bits.push_back(static_cast<std::uint8_t>((block >> (i % 64)) & 1u));
  }
  return w;
}

std::string WatermarkBits::str() const {
  std::string s;
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

WatermarkBits WatermarkBits::inverted() const {
  WatermarkBits w;
  for (auto b : bits) w.bits.push_back(b ? 0 : 1);
  return w;
}

namespace metrics {

double snr(const std::vector<double>& reference, const std::vector<double>& test) {
  if (reference.size() != test.size())
    throw ShapeError("snr: length mismatch " + std::to_string(reference.size()) + " vs " +
                     std::to_string(test.size()));
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    signal += reference[i] * reference[i];
    const double d = reference[i] - test[i];
    noise += d * d;
  }
  if (signal <= 0.0) throw std::invalid_argument("snr: reference signal is all zero");
  if (noise == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(signal / noise);
}

double snr(const AudioClip& reference, const AudioClip& test) { return snr(reference.samples, test.samples); }

double bit_acc(const WatermarkBits& truth, const WatermarkBits& decoded) {
  if (truth.size() != decoded.size())
    throw ShapeError("bit_acc: length mismatch " + std::to_string(truth.size()) + " vs " +
                     std::to_string(decoded.size()));
  if (truth.size() == 0) throw std::invalid_argument("bit_acc: empty watermark");
  std::size_t same = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) same += truth.bits[i] == decoded.bits[i];
  return static_cast<double>(same) / static_cast<double>(truth.size());
}

double spectral_convergence(const dsp::Matrix& target, const dsp::Matrix& estimate) {
  if (target.shape() != estimate.shape())
    throw ShapeError("spectral_convergence: shape mismatch " + ad::shape_str(target.shape()) + " vs " +
                     ad::shape_str(estimate.shape()));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = estimate[i] - target[i];
    num += d * d;
    den += target[i] * target[i];
  }
  if (den <= 0.0) throw std::invalid_argument("spectral_convergence: zero target");
  return std::sqrt(num / den);
}

std::string format_snr(double snr_db) {
  if (std::isinf(snr_db)) return snr_db > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", snr_db);
  return buf;
}

}  // namespace metrics
}  // namespace twm
