#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "twm/distortion.hpp"
#include "twm/model.hpp"
#include "twm/rng.hpp"

namespace twm::eval {

struct EvalRow {
  std::string distortion;  // DistortionSpec::str()
  double snr_db = 0.0;     // distorted vs clean watermarked audio; nan when lengths differ
  double acc = 0.0;
  std::size_t clips = 0;
  std::string error;       // empty unless the distortion failed
};

struct CropPoint {
  double ratio = 0.0;
  distortion::CropPosition position = distortion::CropPosition::front;
  double acc = 0.0;
  std::size_t clips = 0;
};

struct MaskRow {
  std::size_t band = 0;
  double start = 0.0, width = 0.0;
  double spec_acc = 0.0;  // extracted from the masked magnitude directly
  double wave_acc = 0.0;  // after ISTFT and re-analysis
  double snr_db = 0.0;    // masked vs unmasked watermarked audio
};

struct OverwriteReport {
  double wm1_acc = 0.0, wm2_acc = 0.0;
  double snr_db = 0.0;  // doubly watermarked vs original
  std::size_t clips = 0;
};

inline constexpr const char* kRobustnessHeader = "distortion,snr_db,acc,clips,error";
inline constexpr const char* kCropHeader = "ratio,position,acc,clips";
inline constexpr const char* kMaskHeader = "band,start,width,spec_acc,wave_acc,snr_db";
inline constexpr const char* kOverwriteHeader = "wm1_acc,wm2_acc,snr_db,clips";

/// Watermark for clip i of an evaluation run.
WatermarkBits eval_watermark(std::uint64_t seed, std::size_t clip_index, std::size_t n);

/// Rows of the preprocessing table: resampling, amplitude scaling, requantization,
/// median filtering, low/high pass and Gaussian noise.
std::vector<distortion::DistortionSpec> default_robustness_specs();

std::vector<EvalRow> robustness_table(const model::Model& m, const std::vector<AudioClip>& test,
                                      const std::vector<distortion::DistortionSpec>& specs, std::uint64_t seed = 0);

std::vector<CropPoint> crop_curve(const model::Model& m, const std::vector<AudioClip>& test,
                                  const std::vector<double>& ratios,
                                  const std::vector<distortion::CropPosition>& positions, std::uint64_t seed = 0);

/// One row per contiguous band of width band_width covering [0, 1).
std::vector<MaskRow> mask_study(const model::Model& m, const std::vector<AudioClip>& test, double band_width = 0.1,
                                std::uint64_t seed = 0);

/// Embeds wm1 then wm2 with the same model and extracts once.
OverwriteReport overwrite_eval(const model::Model& m, const std::vector<AudioClip>& test, std::uint64_t seed = 0);
/// Same with explicit payloads, one pair per clip.
OverwriteReport overwrite_eval(const model::Model& m, const std::vector<AudioClip>& test,
                               const std::vector<WatermarkBits>& first, const std::vector<WatermarkBits>& second);

std::string to_csv(const std::vector<EvalRow>& rows);
std::string to_csv(const std::vector<CropPoint>& rows);
std::string to_csv(const std::vector<MaskRow>& rows);
std::string to_csv(const OverwriteReport& report);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace twm::eval
