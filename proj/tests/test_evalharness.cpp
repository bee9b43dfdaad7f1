#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_helpers.hpp"
#include "twm/evalharness.hpp"
#include "twm/metrics.hpp"
#include "twm/trainer.hpp"

using namespace twm;
using namespace twm::eval;
using distortion::CropPosition;
using distortion::DistortionSpec;

namespace {

const model::Model& untrained() {
  static const model::Model m(trainer::desk_scale_config().arch, 17);
  return m;
}

const std::vector<AudioClip>& clips() {
  static const std::vector<AudioClip> c = trainer::synthetic_test_set(3, 1.0);
  return c;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::size_t fields(const std::string& line) {
  std::size_t n = 1;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    n += c == ',' && !quoted;
  }
  return n;
}

}  // namespace

TEST_CASE("CSV headers are pinned") {
  CHECK(std::string(kRobustnessHeader) == "distortion,snr_db,acc,clips,error");
  CHECK(std::string(kCropHeader) == "ratio,position,acc,clips");
  CHECK(std::string(kMaskHeader) == "band,start,width,spec_acc,wave_acc,snr_db");
  CHECK(std::string(kOverwriteHeader) == "wm1_acc,wm2_acc,snr_db,clips");
  CHECK(lines(to_csv(std::vector<EvalRow>{})) == std::vector<std::string>{kRobustnessHeader});
  CHECK(lines(to_csv(std::vector<CropPoint>{})) == std::vector<std::string>{kCropHeader});
  CHECK(lines(to_csv(std::vector<MaskRow>{})) == std::vector<std::string>{kMaskHeader});
  CHECK(lines(to_csv(OverwriteReport{}))[0] == kOverwriteHeader);

  EvalRow r{"amplitude_scale:0.2", 1.9382, 1.0, 3, ""};
  CHECK(lines(to_csv(std::vector<EvalRow>{r}))[1] == "amplitude_scale:0.2,1.9382,1.000000,3,");
  EvalRow e{"low_pass:9000", std::nan(""), std::nan(""), 0, "cutoff, too high"};
  CHECK(lines(to_csv(std::vector<EvalRow>{e}))[1] == "low_pass:9000,nan,nan,0,\"cutoff, too high\"");
  CHECK(lines(to_csv(std::vector<CropPoint>{{0.5, CropPosition::middle, 0.75, 4}}))[1] ==
        "0.500000,middle,0.750000,4");
  CHECK(lines(to_csv(std::vector<MaskRow>{{2, 0.2, 0.1, 1.0, 0.9, metrics::kInfiniteSnr}}))[1] ==
        "2,0.200000,0.100000,1.000000,0.900000,inf");
  CHECK(lines(to_csv(OverwriteReport{0.4, 1.0, 25.5, 32}))[1] == "0.400000,1.000000,25.5000,32");
}

TEST_CASE("evaluation watermarks are seeded per clip") {
  CHECK(eval_watermark(0, 3, 10) == eval_watermark(0, 3, 10));
  CHECK(eval_watermark(0, 3, 10).size() == 10);
  int differ = 0;
  for (std::size_t i = 0; i < 20; ++i) differ += !(eval_watermark(0, i, 10) == eval_watermark(0, i + 1, 10));
  CHECK(differ >= 18);
  CHECK_FALSE(eval_watermark(1, 0, 64) == eval_watermark(2, 0, 64));
}

TEST_CASE("default robustness rows") {
  const auto specs = default_robustness_specs();
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.str());
  CHECK(names == std::vector<std::string>{"resample:16000", "resample:8000", "amplitude_scale:0.2",
                                          "amplitude_scale:0.4", "amplitude_scale:0.6", "amplitude_scale:0.8",
                                          "requantize:8", "median_filter:5", "median_filter:15",
                                          "median_filter:25", "median_filter:35", "low_pass:2000", "high_pass:500",
                                          "gaussian_noise:20:seed=0", "gaussian_noise:25:seed=0",
                                          "gaussian_noise:30:seed=0", "gaussian_noise:35:seed=0",
                                          "gaussian_noise:40:seed=0"});
}

TEST_CASE("robustness table: one row per spec, analytic SNRs, error rows, determinism") {
  auto specs = default_robustness_specs();
  DistortionSpec broken;
  broken.kind = distortion::Kind::low_pass;
  broken.cutoff_hz = 20000;  // above Nyquist at 22.05 kHz
  specs.insert(specs.begin() + 3, broken);
  const auto rows = robustness_table(untrained(), clips(), specs, 5);
  REQUIRE(rows.size() == specs.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].distortion == specs[i].str());

  CHECK(rows[3].clips == 0);
  CHECK_FALSE(rows[3].error.empty());
  const double analytic[] = {1.9382, 4.4368, 7.9589, 13.9790};
  for (int i = 0; i < 4; ++i) {
    const EvalRow& r = rows[static_cast<std::size_t>(2 + (i > 0) + i)];
    CAPTURE(r.distortion);
    CHECK(r.error.empty());
    CHECK(r.clips == 3);
    CHECK(std::abs(r.snr_db - analytic[i]) <= 1e-3);
  }
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    CHECK(r.acc >= 0.0);
    CHECK(r.acc <= 1.0);
  }
  for (std::size_t i = rows.size() - 5; i < rows.size(); ++i)
    CHECK(std::abs(rows[i].snr_db - specs[i].snr_db) <= 0.05);

  const std::string csv = to_csv(rows);
  const auto ls = lines(csv);
  CHECK(ls.size() == specs.size() + 1);
  for (const auto& l : ls) CHECK(fields(l) == 5);
  CHECK(to_csv(robustness_table(untrained(), clips(), specs, 5)) == csv);
  CHECK_THROWS_AS(robustness_table(untrained(), {}, specs), std::invalid_argument);
}

TEST_CASE("crop curve: ratio 0 equals clean extraction") {
  const auto& m = untrained();
  const auto pts = crop_curve(m, clips(), {0.0, 0.5, 0.9},
                              {CropPosition::front, CropPosition::middle, CropPosition::behind}, 4);
  REQUIRE(pts.size() == 9);
  double clean = 0.0;
  for (std::size_t i = 0; i < clips().size(); ++i) {
    const WatermarkBits w = eval_watermark(4, i, 10);
    clean += metrics::bit_acc(w, model::extract(m, model::embed(m, clips()[i], w)));
  }
  clean /= static_cast<double>(clips().size());
  for (std::size_t i = 0; i < 3; ++i) CHECK(pts[i].acc == clean);
  CHECK(pts[4].ratio == 0.5);
  CHECK(pts[4].position == CropPosition::middle);
  for (const auto& p : pts) CHECK(p.clips == 3);
}

TEST_CASE("mask study: ten bands and consistent accuracies") {
  const auto rows = mask_study(untrained(), clips(), 0.1, 2);
  REQUIRE(rows.size() == 10);
  for (std::size_t b = 0; b < 10; ++b) {
    CHECK(rows[b].band == b);
    CHECK(rows[b].start == doctest::Approx(0.1 * static_cast<double>(b)));
    CHECK(rows[b].spec_acc >= 0.0);
    CHECK(rows[b].wave_acc <= 1.0);
  }
  CHECK(lines(to_csv(rows)).size() == 11);
  CHECK(mask_study(untrained(), clips(), 0.25, 2).size() == 4);
  CHECK_THROWS_AS(mask_study(untrained(), clips(), 0.0), std::invalid_argument);

  // A band holding no energy is a no-op for the waveform.
  dsp::Spectrogram spec = dsp::stft(model::embed(untrained(), clips()[0], eval_watermark(0, 0, 10)));
  for (std::size_t t = 0; t < spec.frames(); ++t)
    for (std::size_t k = 461; k < 513; ++k) spec.magnitude[t * 513 + k] = 0.0;
  const AudioClip before = dsp::istft(spec);
  distortion::mask_band(spec, 0.9, 0.1);
  CHECK(dsp::istft(spec).samples == before.samples);
}

TEST_CASE("overwriting") {
  const auto& m = untrained();
  const OverwriteReport rep = overwrite_eval(m, clips(), 3);
  CHECK(rep.clips == 3);
  CHECK(std::isfinite(rep.snr_db));
  double wm1 = 0.0, wm2 = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const WatermarkBits w1 = eval_watermark(3, 2 * i, 10), w2 = eval_watermark(3, 2 * i + 1, 10);
    const WatermarkBits got = model::extract(m, model::embed(m, model::embed(m, clips()[i], w1), w2));
    wm1 += metrics::bit_acc(w1, got) / 3;
    wm2 += metrics::bit_acc(w2, got) / 3;
  }
  CHECK(rep.wm1_acc == doctest::Approx(wm1));
  CHECK(rep.wm2_acc == doctest::Approx(wm2));

  // Identical payloads score identically.
  std::vector<WatermarkBits> same;
  for (std::size_t i = 0; i < 3; ++i) same.push_back(eval_watermark(9, i, 10));
  const OverwriteReport twin = overwrite_eval(m, clips(), same, same);
  CHECK(twin.wm1_acc == twin.wm2_acc);
  CHECK_THROWS_AS(overwrite_eval(m, clips(), same, {}), std::invalid_argument);
}

TEST_CASE("reports are written verbatim") {
  test::TempDir dir;
  const std::string text = to_csv(OverwriteReport{0.5, 1.0, 20.0, 1});
  write_text(text, dir / "r.csv");
  std::ifstream f(dir / "r.csv", std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  CHECK(os.str() == text);
  CHECK_THROWS(write_text(text, dir / "missing" / "r.csv"));
}
