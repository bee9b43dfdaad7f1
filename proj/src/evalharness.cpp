#include "twm/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "twm/dsp.hpp"
#include "twm/metrics.hpp"

namespace twm::eval {

namespace {

using distortion::CropPosition;
using distortion::DistortionSpec;

void require_test_set(const std::vector<AudioClip>& test) {
  if (test.empty()) throw std::invalid_argument("evaluation needs a non-empty test set");
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return metrics::format_snr(v);
}

std::string acc_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Marked {
  WatermarkBits w;
  AudioClip audio;
};

std::vector<Marked> embed_all(const model::Model& m, const std::vector<AudioClip>& test, std::uint64_t seed) {
  std::vector<Marked> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    WatermarkBits w = eval_watermark(seed, i, m.arch().wm_len);
    AudioClip aw = model::embed(m, test[i], w);
    out.push_back({std::move(w), std::move(aw)});
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

}  // namespace

WatermarkBits eval_watermark(std::uint64_t seed, std::size_t clip_index, std::size_t n) {
  Rng rng = Rng(seed).split(clip_index);
  WatermarkBits w;
  for (std::size_t i = 0; i < n; ++i) w.bits.push_back(static_cast<std::uint8_t>(rng.next() >> 63));
  return w;
}

std::vector<DistortionSpec> default_robustness_specs() {
  std::vector<DistortionSpec> specs;
  for (int rate : {16000, 8000}) {
    DistortionSpec s;
    s.kind = distortion::Kind::resample;
    s.rate = rate;
    specs.push_back(s);
  }
  for (double p : {0.2, 0.4, 0.6, 0.8}) specs.push_back(DistortionSpec::amplitude(p));
  {
    DistortionSpec s;
    s.kind = distortion::Kind::requantize;
    s.bits = 8;
    specs.push_back(s);
  }
  for (std::size_t k : {5, 15, 25, 35}) {
    DistortionSpec s;
    s.kind = distortion::Kind::median_filter;
    s.k = k;
    specs.push_back(s);
  }
  {
    DistortionSpec s;
    s.kind = distortion::Kind::low_pass;
    s.cutoff_hz = 2000.0;
    specs.push_back(s);
    s.kind = distortion::Kind::high_pass;
    s.cutoff_hz = 500.0;
    specs.push_back(s);
  }
  for (double db : {20.0, 25.0, 30.0, 35.0, 40.0}) specs.push_back(DistortionSpec::noise(db));
  return specs;
}

std::vector<EvalRow> robustness_table(const model::Model& m, const std::vector<AudioClip>& test,
                                      const std::vector<DistortionSpec>& specs, std::uint64_t seed) {
  require_test_set(test);
  const std::vector<Marked> marked = embed_all(m, test, seed);
  std::vector<EvalRow> rows;
  for (const DistortionSpec& spec : specs) {
    EvalRow row;
    row.distortion = spec.str();
    try {
      double snr_sum = 0.0, acc_sum = 0.0;
      for (std::size_t i = 0; i < marked.size(); ++i) {
        DistortionSpec per_clip = spec;
        per_clip.seed = spec.seed + i;
        const AudioClip d = distortion::apply(marked[i].audio, per_clip);
        snr_sum += d.size() == marked[i].audio.size() ? metrics::snr(marked[i].audio, d)
                                                      : std::numeric_limits<double>::quiet_NaN();
        acc_sum += metrics::bit_acc(marked[i].w, model::extract(m, d));
      }
      row.clips = marked.size();
      row.snr_db = snr_sum / static_cast<double>(row.clips);
      row.acc = acc_sum / static_cast<double>(row.clips);
    } catch (const std::exception& e) {
      row.clips = 0;
      row.snr_db = std::numeric_limits<double>::quiet_NaN();
      row.acc = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CropPoint> crop_curve(const model::Model& m, const std::vector<AudioClip>& test,
                                  const std::vector<double>& ratios, const std::vector<CropPosition>& positions,
                                  std::uint64_t seed) {
  require_test_set(test);
  const std::vector<Marked> marked = embed_all(m, test, seed);
  std::vector<CropPoint> out;
  for (double ratio : ratios) {
    for (CropPosition pos : positions) {
      // Ratio 0 is the uncropped reference point.
      const DistortionSpec spec = ratio == 0.0 ? DistortionSpec{} : DistortionSpec::cropping(ratio, pos);
      CropPoint p{ratio, pos, 0.0, marked.size()};
      for (const Marked& mk : marked) p.acc += metrics::bit_acc(mk.w, model::extract(m, distortion::apply(mk.audio, spec)));
      p.acc /= static_cast<double>(marked.size());
      out.push_back(p);
    }
  }
  return out;
}

std::vector<MaskRow> mask_study(const model::Model& m, const std::vector<AudioClip>& test, double band_width,
                                std::uint64_t seed) {
  require_test_set(test);
  if (!(band_width > 0.0 && band_width <= 1.0)) throw std::invalid_argument("mask_study: band width must be in (0, 1]");
  const auto bands = static_cast<std::size_t>(std::llround(1.0 / band_width));
  const std::vector<Marked> marked = embed_all(m, test, seed);
  std::vector<MaskRow> rows;
  for (std::size_t b = 0; b < bands; ++b) {
    MaskRow row;
    row.band = b;
    row.start = static_cast<double>(b) * band_width;
    row.width = band_width;
    for (const Marked& mk : marked) {
      dsp::Spectrogram spec = dsp::stft(mk.audio, m.arch().stft);
      distortion::mask_band(spec, row.start, row.width);
      row.spec_acc += metrics::bit_acc(mk.w, model::extract_magnitude(m, spec.magnitude));
      AudioClip wave = dsp::istft(spec);
      wave.sample_rate = mk.audio.sample_rate;
      row.wave_acc += metrics::bit_acc(mk.w, model::extract(m, wave));
      row.snr_db += metrics::snr(mk.audio, wave);
    }
    const auto n = static_cast<double>(marked.size());
    row.spec_acc /= n;
    row.wave_acc /= n;
    row.snr_db /= n;
    rows.push_back(row);
  }
  return rows;
}

OverwriteReport overwrite_eval(const model::Model& m, const std::vector<AudioClip>& test, std::uint64_t seed) {
  const std::size_t n = m.arch().wm_len;
  std::vector<WatermarkBits> first, second;
  for (std::size_t i = 0; i < test.size(); ++i) {
    first.push_back(eval_watermark(seed, 2 * i, n));
    second.push_back(eval_watermark(seed, 2 * i + 1, n));
  }
  return overwrite_eval(m, test, first, second);
}

OverwriteReport overwrite_eval(const model::Model& m, const std::vector<AudioClip>& test,
                               const std::vector<WatermarkBits>& first, const std::vector<WatermarkBits>& second) {
  require_test_set(test);
  if (first.size() != test.size() || second.size() != test.size())
    throw std::invalid_argument("overwrite_eval: need one payload pair per clip");
  OverwriteReport r;
  r.clips = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const AudioClip twice = model::embed(m, model::embed(m, test[i], first[i]), second[i]);
    const WatermarkBits got = model::extract(m, twice);
    r.wm1_acc += metrics::bit_acc(first[i], got);
    r.wm2_acc += metrics::bit_acc(second[i], got);
    r.snr_db += metrics::snr(test[i], twice);
  }
  const auto count = static_cast<double>(test.size());
  r.wm1_acc /= count;
  r.wm2_acc /= count;
  r.snr_db /= count;
  return r;
}

std::string to_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << kRobustnessHeader << '\n';
  for (const EvalRow& r : rows)
    os << csv_field(r.distortion) << ',' << num(r.snr_db) << ',' << (std::isnan(r.acc) ? "nan" : acc_str(r.acc)) << ','
       << r.clips << ',' << csv_field(r.error) << '\n';
  return os.str();
}

std::string to_csv(const std::vector<CropPoint>& rows) {
  std::ostringstream os;
  os << kCropHeader << '\n';
  for (const CropPoint& p : rows)
    os << acc_str(p.ratio) << ',' << distortion::position_name(p.position) << ',' << acc_str(p.acc) << ',' << p.clips
       << '\n';
  return os.str();
}

std::string to_csv(const std::vector<MaskRow>& rows) {
  std::ostringstream os;
  os << kMaskHeader << '\n';
  for (const MaskRow& r : rows)
    os << r.band << ',' << acc_str(r.start) << ',' << acc_str(r.width) << ',' << acc_str(r.spec_acc) << ','
       << acc_str(r.wave_acc) << ',' << num(r.snr_db) << '\n';
  return os.str();
}

std::string to_csv(const OverwriteReport& r) {
  std::ostringstream os;
  os << kOverwriteHeader << '\n'
     << acc_str(r.wm1_acc) << ',' << acc_str(r.wm2_acc) << ',' << num(r.snr_db) << ',' << r.clips << '\n';
  return os.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace twm::eval
