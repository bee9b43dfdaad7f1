#include "twm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "twm/distortion.hpp"

namespace twm::trainer {

namespace {

constexpr std::uint64_t kTestSeedBase = 1'000'000;

enum Stream : std::uint64_t { kInit = 1, kData = 2, kWatermark = 3 };

// Graph tensors are large and short-lived; keeping freed blocks in the heap
// avoids an mmap/munmap pair and fresh page faults for every allocation.
void keep_heap_warm() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

void set_trainable(const std::vector<ad::Var<float>>& params, bool on) {
  for (const auto& p : params) p.node()->requires_grad = on;
}

ad::Var<float> as_var(const AudioClip& clip) {
  return ad::constant(
      ad::Tensor<float>(ad::Shape{clip.size()}, std::vector<float>(clip.samples.begin(), clip.samples.end())));
}

WatermarkBits random_bits(Rng& rng, std::size_t n) {
  WatermarkBits w;
  for (std::size_t i = 0; i < n; ++i) w.bits.push_back(static_cast<std::uint8_t>(rng.next() >> 63));
  return w;
}

double finite_or_throw(const ad::Var<float>& v, const char* what, std::size_t step) {
  const double x = v.value().item();
  if (!std::isfinite(x)) throw DivergenceError(std::string("non-finite ") + what, static_cast<long>(step));
  return x;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("clip_seconds must be positive");
  if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
  if (use_distortion_layer && gl_train_iters < 1) throw std::invalid_argument("gl_train_iters must be >= 1");
  for (const auto* a : {&generator_adam, &discriminator_adam})
    if (!(a->lr > 0.0) || !(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0) ||
        !(a->eps > 0.0))
      throw std::invalid_argument("Adam hyperparameters out of range");
  if (dataset.wav_dir.empty() && dataset.synthetic_clips < 1)
    throw std::invalid_argument("synthetic corpus needs at least one clip");
  weights.validate();
  arch.validate();
  if (mel.n_mels < 1) throw std::invalid_argument("n_mels must be >= 1");
  if (mel.f_min < 0.0 || (mel.f_max > 0.0 && mel.f_max <= mel.f_min) || mel.f_max > sample_rate / 2.0)
    throw std::invalid_argument("mel band edges out of range");
}

TrainConfig desk_scale_config() {
  TrainConfig cfg;
  cfg.arch.width = 4;
  cfg.arch.disc_widths = {2, 4, 8};
  cfg.generator_adam.lr = 3e-3;
  cfg.discriminator_adam.lr = 3e-3;
  return cfg;
}

std::string format_log_row(const StepLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", r.step, r.l_e, r.l_adv, r.l_d, r.l_w,
                r.l_w_hat, r.l_total);
  return buf;
}

void write_log_csv(const std::vector<StepLog>& log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(path.string() + ": cannot open training log for writing");
  f << kLogHeader << '\n';
  for (const auto& r : log) f << format_log_row(r) << '\n';
}

std::vector<AudioClip> synthetic_test_set(std::size_t count, double seconds, int sample_rate) {
  std::vector<AudioClip> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_test_signal(kTestSeedBase + i, seconds, sample_rate));
  return out;
}

std::vector<AudioClip> load_dataset(const TrainConfig& cfg) {
  std::vector<AudioClip> out;
  if (cfg.dataset.wav_dir.empty()) {
    for (std::size_t i = 0; i < cfg.dataset.synthetic_clips; ++i)
      out.push_back(synth_test_signal(cfg.dataset.synthetic_seed + i, cfg.clip_seconds, cfg.sample_rate));
    return out;
  }
  if (!std::filesystem::is_directory(cfg.dataset.wav_dir))
    throw WavError(WavErrorKind::missing_file, cfg.dataset.wav_dir.string() + ": not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(cfg.dataset.wav_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  const auto len = static_cast<std::size_t>(std::llround(cfg.clip_seconds * cfg.sample_rate));
  for (const auto& f : files) {
    const AudioClip clip = resample(read_wav(f), cfg.sample_rate);
    for (std::size_t off = 0; off + len <= clip.size(); off += len) {
      AudioClip c{std::vector<double>(clip.samples.begin() + static_cast<std::ptrdiff_t>(off),
                                      clip.samples.begin() + static_cast<std::ptrdiff_t>(off + len)),
                  cfg.sample_rate};
      double peak = 0.0;
      for (double v : c.samples) peak = std::max(peak, std::abs(v));
      if (peak > 0.0) out.push_back(std::move(c));
    }
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const StepCallback& on_step) { return train(cfg, load_dataset(cfg), on_step); }

TrainResult train(const TrainConfig& cfg, const std::vector<AudioClip>& data, const StepCallback& on_step) {
  cfg.validate();
  keep_heap_warm();
  if (data.size() < cfg.batch_size)
    throw std::invalid_argument("dataset has " + std::to_string(data.size()) + " clips, fewer than batch_size " +
                                std::to_string(cfg.batch_size));
  Rng root(cfg.seed);
  Rng data_rng = root.split(kData);
  Rng wm_rng = root.split(kWatermark);
  model::Model net(cfg.arch, root.split(kInit).next());

  auto gen = net.generator_params();
  auto dis = net.discriminator_params();
  TrainingState state;
  state.generator.config = cfg.generator_adam;
  state.discriminator.config = cfg.discriminator_adam;
  state.generator.reset(gen);
  state.discriminator.reset(dis);

  const dsp::MelBasis<float> basis(dsp::mel_filterbank(cfg.mel, cfg.arch.stft.n_fft, cfg.sample_rate));
  const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
  const ad::Var<float> zero = ad::constant(ad::Tensor<float>::scalar(0.0f));

  std::vector<StepLog> log;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StepLog row;
    row.step = step;
    net.params().zero_grad();

    std::vector<std::size_t> picks;
    std::vector<ad::Tensor<float>> watermarked;
    set_trainable(dis, false);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(data_rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
      picks.push_back(idx);
      const WatermarkBits w = random_bits(wm_rng, cfg.arch.wm_len);
      const ad::Var<float> a = as_var(data[idx]);

      const ad::Var<float> aw = net.embed_audio(a, w);
      const ad::Var<float> l_e = model::embedding_loss(aw, a.value());
      row.l_e += finite_or_throw(l_e, "embedding loss", step) / cfg.batch_size;
      const ad::Var<float> l_adv = model::adversarial_loss(net.discriminate_audio(aw));
      const ad::Var<float> l_w = model::watermark_loss(net.extract_audio(aw), w);
      ad::Var<float> l_w_hat = zero;
      if (cfg.use_distortion_layer) {
        // A silent embedder output cannot be peak-normalized; it passes through undistorted.
        const bool silent = std::all_of(aw.value().values().begin(), aw.value().values().end(),
                                        [](float v) { return v == 0.0f; });
        const ad::Var<float> distorted =
            silent ? aw : distortion::dp_train(aw, basis, cfg.arch.stft, cfg.gl_train_iters);
        l_w_hat = model::watermark_loss(net.extract_audio(distorted), w);
      }
      const ad::Var<float> total = model::total_loss(cfg.weights, l_e, l_adv, l_w, l_w_hat);

      row.l_adv += finite_or_throw(l_adv, "adversarial loss", step) / cfg.batch_size;
      row.l_w += finite_or_throw(l_w, "watermark loss", step) / cfg.batch_size;
      row.l_w_hat += finite_or_throw(l_w_hat, "distorted watermark loss", step) / cfg.batch_size;
      row.l_total += finite_or_throw(total, "total loss", step) / cfg.batch_size;
      ad::backward(ad::scale(total, inv_batch));
      watermarked.push_back(aw.value());
    }
    set_trainable(dis, true);
    ad::adam_step(gen, state.generator, static_cast<long>(step));

    set_trainable(gen, false);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const ad::Var<float> real = net.discriminate_audio(as_var(data[picks[b]]));
      const ad::Var<float> fake = net.discriminate_audio(ad::constant(watermarked[b]));
      const ad::Var<float> l_d = model::discriminator_loss(real, fake);
      row.l_d += finite_or_throw(l_d, "discriminator loss", step) / cfg.batch_size;
      ad::backward(ad::scale(l_d, inv_batch));
    }
    set_trainable(gen, true);
    ad::adam_step(dis, state.discriminator, static_cast<long>(step));

    log.push_back(row);
    if (on_step && !on_step(row)) break;
  }
  net.params().zero_grad();
  TrainResult result{Checkpoint{std::move(net), std::move(state), log.size()}, std::move(log)};
  return result;
}

}  // namespace twm::trainer
