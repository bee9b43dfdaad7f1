#pragma once

#include <limits>
#include <map>
#include <string>

#include "twm/audio_io.hpp"
#include "twm/dsp.hpp"
#include "twm/watermark.hpp"

namespace twm::metrics {

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// 10 log10(sum ref^2 / sum (ref - test)^2). Identical signals give +inf.
double snr(const AudioClip& reference, const AudioClip& test);
double snr(const std::vector<double>& reference, const std::vector<double>& test);

/// Fraction of matching bits.
double bit_acc(const WatermarkBits& truth, const WatermarkBits& decoded);

/// ||estimate - target||_F / ||target||_F.
double spectral_convergence(const dsp::Matrix& target, const dsp::Matrix& estimate);

/// Formats an SNR for tables ("inf" for the identical-signal sentinel).
std::string format_snr(double snr_db);

struct MetricReport {
  double snr_db = 0.0;
  double acc = 0.0;
  std::map<std::string, double> aux;
};

}  // namespace twm::metrics
