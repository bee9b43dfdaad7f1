#include "twm/model.hpp"

#include <sstream>

#include "twm/metrics.hpp"

namespace twm::model {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
  return out;
}

}  // namespace

std::string Architecture::descriptor() const {
  std::ostringstream os;
  os << "wm_len=" << wm_len << " width=" << width << " disc=" << join(disc_widths) << " kernel=" << kernel
     << " blocks=" << carrier_blocks << "," << embedder_blocks << "," << extractor_blocks << " nfft=" << stft.n_fft
     << " hop=" << stft.hop << " win=" << stft.win_len;
  return os.str();
}

Architecture Architecture::parse_descriptor(const std::string& text) {
  Architecture a;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("architecture descriptor: bad token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "wm_len") {
      a.wm_len = std::stoul(val);
    } else if (key == "width") {
      a.width = std::stoul(val);
    } else if (key == "disc") {
      a.disc_widths = split_sizes(val);
    } else if (key == "kernel") {
      a.kernel = std::stoul(val);
    } else if (key == "blocks") {
      const auto b = split_sizes(val);
      if (b.size() != 3) throw std::invalid_argument("architecture descriptor: blocks needs three counts");
      a.carrier_blocks = b[0];
      a.embedder_blocks = b[1];
      a.extractor_blocks = b[2];
    } else if (key == "nfft") {
      a.stft.n_fft = std::stoul(val);
    } else if (key == "hop") {
      a.stft.hop = std::stoul(val);
    } else if (key == "win") {
      a.stft.win_len = std::stoul(val);
    } else {
      throw std::invalid_argument("architecture descriptor: unknown key '" + key + "'");
    }
  }
  a.validate();
  return a;
}

void Architecture::validate() const {
  if (wm_len == 0) throw std::invalid_argument("watermark length must be >= 1");
  if (width == 0) throw std::invalid_argument("network width must be >= 1");
  if (disc_widths.empty()) throw std::invalid_argument("discriminator needs at least one block");
  for (auto w : disc_widths)
    if (w == 0) throw std::invalid_argument("discriminator widths must be >= 1");
  if (kernel % 2 == 0) throw std::invalid_argument("kernel size must be odd");
  if (carrier_blocks < 1 || embedder_blocks < 2 || extractor_blocks < 2)
    throw std::invalid_argument("block counts: carrier >= 1, embedder >= 2, extractor >= 2");
  stft.validate();
}

void LossWeights::validate() const {
  if (embed < 0 || adv < 0 || wm < 0) throw std::invalid_argument("loss weights must be >= 0");
}

std::vector<std::size_t> carrier_channels(const Architecture& a) {
  std::vector<std::size_t> ch{1};
  for (std::size_t i = 0; i < a.carrier_blocks; ++i) ch.push_back(a.width);
  return ch;
}

std::vector<std::size_t> embedder_channels(const Architecture& a) {
  std::vector<std::size_t> ch{a.width + 2};
  for (std::size_t i = 0; i + 1 < a.embedder_blocks; ++i) ch.push_back(a.width);
  ch.push_back(1);
  return ch;
}

std::vector<std::size_t> extractor_channels(const Architecture& a) {
  std::vector<std::size_t> ch{1};
  for (std::size_t i = 0; i + 1 < a.extractor_blocks; ++i) ch.push_back(a.width);
  ch.push_back(1);
  return ch;
}

namespace {

ad::Var<float> audio_var(const AudioClip& clip) {
  return ad::constant(ad::Tensor<float>(ad::Shape{clip.size()}, std::vector<float>(clip.samples.begin(), clip.samples.end())));
}

}  // namespace

AudioClip embed(const Model& m, const AudioClip& clip, const WatermarkBits& w) {
  const ad::Var<float> out = m.embed_audio(audio_var(clip), w);
  AudioClip r;
  r.sample_rate = clip.sample_rate;
  r.samples.assign(out.value().values().begin(), out.value().values().end());
  return r;
}

WatermarkBits extract(const Model& m, const AudioClip& clip) {
  const ad::Var<float> soft = m.extract_audio(audio_var(clip));
  return WatermarkBits::from_soft(std::vector<double>(soft.value().values().begin(), soft.value().values().end()));
}

WatermarkBits extract_magnitude(const Model& m, const dsp::Matrix& magnitude) {
  ad::Tensor<float> s(magnitude.shape());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(magnitude[i]);
  const ad::Var<float> soft = m.extract_spectrogram(ad::constant(std::move(s)));
  return WatermarkBits::from_soft(std::vector<double>(soft.value().values().begin(), soft.value().values().end()));
}

double discriminate(const Model& m, const AudioClip& clip) { return m.discriminate_audio(audio_var(clip)).value().item(); }

bool all_segments_pass(const std::vector<double>& segment_acc, double threshold) {
  if (segment_acc.empty()) return false;
  for (double a : segment_acc)
    if (!(a >= threshold)) return false;
  return true;
}

std::vector<AudioClip> split_segments(const AudioClip& clip, std::size_t segments) {
  if (segments == 0) throw std::invalid_argument("segment count must be >= 1");
  const std::size_t len = clip.size() / segments;
  if (len == 0)
    throw std::invalid_argument("clip of " + std::to_string(clip.size()) + " samples cannot be split into " +
                                std::to_string(segments) + " segments");
  std::vector<AudioClip> out;
  for (std::size_t i = 0; i < segments; ++i) {
    const auto begin = clip.samples.begin() + static_cast<std::ptrdiff_t>(i * len);
    const auto end = i + 1 == segments ? clip.samples.end() : begin + static_cast<std::ptrdiff_t>(len);
    out.push_back(AudioClip{std::vector<double>(begin, end), clip.sample_rate});
  }
  return out;
}

Detection detect(const Model& m, const AudioClip& clip, const WatermarkBits& w, double threshold,
                 std::size_t segments) {
  if (w.size() != m.arch().wm_len)
    throw std::invalid_argument("watermark has " + std::to_string(w.size()) + " bits, model expects " +
                                std::to_string(m.arch().wm_len));
  Detection d;
  for (const AudioClip& seg : split_segments(clip, segments)) d.segment_acc.push_back(metrics::bit_acc(w, extract(m, seg)));
  d.detected = all_segments_pass(d.segment_acc, threshold);
  return d;
}

}  // namespace twm::model
