#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "twm/ad/nn.hpp"
#include "twm/audio_io.hpp"
#include "twm/dsp_graph.hpp"
#include "twm/watermark.hpp"

namespace twm::model {

/// Layer widths. Defaults are the full-size networks; desk-scale training
/// passes a narrower width.
struct Architecture {
  std::size_t wm_len = 10;
  std::size_t width = 64;
  std::vector<std::size_t> disc_widths{16, 32, 64};
  std::size_t kernel = 3;
  std::size_t carrier_blocks = 6;
  std::size_t embedder_blocks = 4;
  std::size_t extractor_blocks = 6;
  dsp::StftConfig stft;

  std::size_t bins() const { return stft.bins(); }
  /// "wm_len=10 width=64 disc=16,32,64 kernel=3 blocks=6,4,6 nfft=1024 hop=256 win=1024"
  std::string descriptor() const;
  static Architecture parse_descriptor(const std::string& text);
  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct LossWeights {
  double embed = 1.0;   // lambda_e
  double adv = 0.01;    // lambda_adv
  double wm = 0.01;     // lambda_w
  void validate() const;
};

inline constexpr double kSigmoidFloor = 1e-7;

/// Channel sequence of a block chain, e.g. {1, W, W, W, W, W, W} for the carrier encoder.
std::vector<std::size_t> carrier_channels(const Architecture& a);
std::vector<std::size_t> embedder_channels(const Architecture& a);
std::vector<std::size_t> extractor_channels(const Architecture& a);

/// The five watermarking networks and the discriminator over one parameter
/// store. Generator parameters are prefixed "enc_c.", "enc_w.", "emb.",
/// "ext.", "dec."; discriminator parameters "disc.".
template <typename T>
class Networks {
 public:
  /// Fresh parameters drawn from `seed`.
  Networks(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
    arch_.validate();
    Rng rng(seed);
    build(&rng);
  }
  /// Binds an existing store (shapes are verified).
  Networks(const Architecture& arch, ad::ParamStore<T> store) : arch_(arch), store_(std::move(store)) {
    arch_.validate();
    build(nullptr);
  }

  Networks(const Networks& o) : arch_(o.arch_), store_(o.store_.template cast<T>()) { build(nullptr); }
  Networks& operator=(const Networks& o) {
    if (this != &o) {
      arch_ = o.arch_;
      store_ = o.store_.template cast<T>();
      build(nullptr);
    }
    return *this;
  }
  Networks(Networks&&) = default;
  Networks& operator=(Networks&&) = default;

  template <typename U>
  Networks<U> cast() const {
    return Networks<U>(arch_, store_.template cast<U>());
  }

  const Architecture& arch() const noexcept { return arch_; }
  ad::ParamStore<T>& params() noexcept { return store_; }
  const ad::ParamStore<T>& params() const noexcept { return store_; }
  std::vector<ad::Var<T>> generator_params() const {
    std::vector<ad::Var<T>> out;
    for (const char* p : {"enc_c.", "enc_w.", "emb.", "ext.", "dec."})
      for (auto& v : store_.with_prefix(p)) out.push_back(v);
    return out;
  }
  std::vector<ad::Var<T>> discriminator_params() const { return store_.with_prefix("disc."); }

  /// s (frames x bins) and bits -> s_w (frames x bins), clamped at 0.
  ad::Var<T> embed_spectrogram(const ad::Var<T>& s, const WatermarkBits& w) const {
    const std::size_t frames = frames_of(s, "embed_spectrogram");
    if (w.size() != arch_.wm_len)
      throw std::invalid_argument("watermark has " + std::to_string(w.size()) + " bits, model expects " +
                                  std::to_string(arch_.wm_len));
    const std::size_t bins = arch_.bins();
    ad::Tensor<T> wt(ad::Shape{w.size()});
    for (std::size_t i = 0; i < w.size(); ++i) wt[i] = static_cast<T>(w.bits[i]);
    const ad::Var<T> s3 = ad::reshape(s, ad::Shape{1, frames, bins});
    const ad::Var<T> fc = chain(carrier_, s3);
    const ad::Var<T> fw = ad::leaky_relu(enc_w_(ad::constant(wt)), T(0.2));
    const ad::Var<T> fw_rep = ad::repeat_time(ad::reshape(fw, ad::Shape{1, 1, bins}), frames);
    const ad::Var<T> fplus = ad::concat_channels<T>({fc, s3, fw_rep});
    return ad::reshape(ad::relu(chain(embedder_, fplus)), ad::Shape{frames, bins});
  }

  /// s (frames x bins) -> soft watermark (wm_len).
  ad::Var<T> extract_spectrogram(const ad::Var<T>& s) const {
    const std::size_t frames = frames_of(s, "extract_spectrogram");
    const std::size_t bins = arch_.bins();
    const ad::Var<T> f = chain(extractor_, ad::reshape(s, ad::Shape{1, frames, bins}));
    return dec_(ad::reshape(ad::mean_time(f), ad::Shape{bins}));
  }

  /// s (frames x bins) -> scalar logit.
  ad::Var<T> discriminate_spectrogram(const ad::Var<T>& s) const {
    const std::size_t frames = frames_of(s, "discriminate_spectrogram");
    ad::Var<T> h = ad::reshape(s, ad::Shape{1, frames, arch_.bins()});
    for (const auto& b : disc_) h = b(h);
    return ad::reshape(disc_out_(ad::avg_pool_all(h)), ad::Shape{});
  }

  /// Audio -> watermarked audio of the same length, reusing the input phase.
  ad::Var<T> embed_audio(const ad::Var<T>& audio, const WatermarkBits& w) const {
    require_audio(audio, "embed_audio");
    const ad::Var<T> spec = dsp::stft(audio, arch_.stft);
    const ad::Var<T> mag = dsp::magnitude(spec);
    ad::Tensor<T> c(mag.shape()), sn(mag.shape());
    for (std::size_t i = 0; i < mag.size(); ++i) {
      const double re = spec.value()[2 * i], im = spec.value()[2 * i + 1];
      const double phase = std::atan2(im, re);
      c[i] = static_cast<T>(std::cos(phase));
      sn[i] = static_cast<T>(std::sin(phase));
    }
    const ad::Var<T> sw = embed_spectrogram(mag, w);
    return dsp::istft(dsp::with_phase(sw, c, sn), arch_.stft, audio.size());
  }

  ad::Var<T> extract_audio(const ad::Var<T>& audio) const {
    require_audio(audio, "extract_audio");
    return extract_spectrogram(dsp::magnitude(dsp::stft(audio, arch_.stft)));
  }

  ad::Var<T> discriminate_audio(const ad::Var<T>& audio) const {
    require_audio(audio, "discriminate");
    return discriminate_spectrogram(dsp::magnitude(dsp::stft(audio, arch_.stft)));
  }

  /// Block chains, exposed for wiring tests.
  std::vector<ad::GatedBlock<T>>& carrier_blocks() { return carrier_; }
  std::vector<ad::GatedBlock<T>>& embedder_blocks() { return embedder_; }
  std::vector<ad::GatedBlock<T>>& extractor_blocks() { return extractor_; }
  ad::Linear<T>& watermark_encoder() { return enc_w_; }
  ad::Linear<T>& decoder() { return dec_; }
  ad::Linear<T>& discriminator_head() { return disc_out_; }

 private:
  static ad::Var<T> chain(const std::vector<ad::GatedBlock<T>>& blocks, ad::Var<T> x) {
    for (const auto& b : blocks) x = b(x);
    return x;
  }
  std::size_t frames_of(const ad::Var<T>& s, const char* op) const {
    if (s.shape().size() != 2 || s.shape()[1] != arch_.bins())
      throw ShapeError(std::string(op) + ": expected frames x " + std::to_string(arch_.bins()) + ", got " +
                       ad::shape_str(s.shape()));
    if (s.shape()[0] == 0) throw std::invalid_argument(std::string(op) + ": spectrogram has no frames");
    return s.shape()[0];
  }
  static void require_audio(const ad::Var<T>& a, const char* op) {
    if (a.shape().size() != 1 || a.size() == 0)
      throw std::invalid_argument(std::string(op) + ": clip is too short for one STFT frame");
  }

  void build(Rng* rng) {
    ad::ParamBuilder<T> pb(store_, rng);
    const std::size_t k = arch_.kernel;
    auto make_chain = [&](const std::string& prefix, const std::vector<std::size_t>& ch) {
      std::vector<ad::GatedBlock<T>> out;
      for (std::size_t i = 0; i + 1 < ch.size(); ++i)
        out.emplace_back(pb, prefix + std::to_string(i), ch[i], ch[i + 1], k);
      return out;
    };
    carrier_ = make_chain("enc_c.", carrier_channels(arch_));
    enc_w_ = ad::Linear<T>(pb, "enc_w", arch_.wm_len, arch_.bins());
    embedder_ = make_chain("emb.", embedder_channels(arch_));
    extractor_ = make_chain("ext.", extractor_channels(arch_));
    dec_ = ad::Linear<T>(pb, "dec", arch_.bins(), arch_.wm_len);
    disc_.clear();
    std::size_t c_in = 1;
    for (std::size_t i = 0; i < arch_.disc_widths.size(); ++i) {
      disc_.emplace_back(pb, "disc." + std::to_string(i), c_in, arch_.disc_widths[i], k);
      c_in = arch_.disc_widths[i];
    }
    disc_out_ = ad::Linear<T>(pb, "disc.out", c_in, 1);
  }

  Architecture arch_;
  ad::ParamStore<T> store_;
  std::vector<ad::GatedBlock<T>> carrier_, embedder_, extractor_;
  ad::Linear<T> enc_w_, dec_;
  std::vector<ad::ReluBlock<T>> disc_;
  ad::Linear<T> disc_out_;
};

using Model = Networks<float>;

// ---------------------------------------------------------------- losses

/// Mean squared sample error between a_w and a.
template <typename T>
ad::Var<T> embedding_loss(const ad::Var<T>& watermarked, const ad::Tensor<T>& original) {
  return ad::mse(watermarked, original);
}

template <typename T>
ad::Var<T> log_sigmoid_clamped(const ad::Var<T>& logit) {
  return ad::log(ad::clamp(ad::sigmoid(logit), T(kSigmoidFloor), T(1.0 - kSigmoidFloor)));
}

/// -log sigma(D(a_w)).
template <typename T>
ad::Var<T> adversarial_loss(const ad::Var<T>& logit_fake) {
  return ad::scale(log_sigmoid_clamped(logit_fake), T(-1));
}

/// -log sigma(D(a)) - log(1 - sigma(D(a_w))).
template <typename T>
ad::Var<T> discriminator_loss(const ad::Var<T>& logit_real, const ad::Var<T>& logit_fake) {
  return ad::scale(ad::add(log_sigmoid_clamped(logit_real), log_sigmoid_clamped(ad::scale(logit_fake, T(-1)))),
                   T(-1));
}

/// Mean squared error between decoded soft values and {0,1} targets.
template <typename T>
ad::Var<T> watermark_loss(const ad::Var<T>& soft, const WatermarkBits& w) {
  if (soft.size() != w.size())
    throw std::invalid_argument("watermark_loss: " + std::to_string(soft.size()) + " outputs for " +
                                std::to_string(w.size()) + " bits");
  ad::Tensor<T> target(soft.shape());
  for (std::size_t i = 0; i < w.size(); ++i) target[i] = static_cast<T>(w.bits[i]);
  return ad::mse(soft, target);
}

template <typename T>
ad::Var<T> total_loss(const LossWeights& lw, const ad::Var<T>& le, const ad::Var<T>& ladv, const ad::Var<T>& lw_clean,
                      const ad::Var<T>& lw_distorted) {
  return ad::weighted_sum<T>({le, ladv, lw_clean, lw_distorted},
                             {T(lw.embed), T(lw.adv), T(lw.wm), T(lw.wm)});
}

// ---------------------------------------------------------------- inference

AudioClip embed(const Model& m, const AudioClip& clip, const WatermarkBits& w);
WatermarkBits extract(const Model& m, const AudioClip& clip);
/// Extraction straight from a magnitude spectrogram (frames x bins).
WatermarkBits extract_magnitude(const Model& m, const dsp::Matrix& magnitude);
double discriminate(const Model& m, const AudioClip& clip);

struct Detection {
  bool detected = false;
  std::vector<double> segment_acc;
};

/// Detected iff every accuracy is >= threshold (inclusive).
bool all_segments_pass(const std::vector<double>& segment_acc, double threshold);

/// Contiguous equal segments, remainder appended to the last one.
std::vector<AudioClip> split_segments(const AudioClip& clip, std::size_t segments);

Detection detect(const Model& m, const AudioClip& clip, const WatermarkBits& w, double threshold = 0.9,
                 std::size_t segments = 5);

}  // namespace twm::model
