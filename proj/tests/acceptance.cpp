// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--fresh] [--cache DIR] [--only N,...]
//
// Trained checkpoints are cached in DIR (build/acceptance_cache by default)
// and reused when their architecture and step count match.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "twm/ad/grad_check.hpp"
#include "twm/ad/nn.hpp"
#include "twm/ad/ops.hpp"
#include "twm/checkpoint.hpp"
#include "twm/distortion.hpp"
#include "twm/dsp.hpp"
#include "twm/evalharness.hpp"
#include "twm/metrics.hpp"
#include "twm/model.hpp"
#include "twm/trainer.hpp"

using namespace twm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned bounds.
constexpr double kRoundTripMaxErr = 1e-6;
constexpr double kRoundTripSeconds = 5.0;
constexpr double kAmplitudeTol = 1e-3;
constexpr double kNoiseTol = 0.05;
constexpr double kGradRelErr = 1e-3;
constexpr double kGradSeconds = 120.0;
constexpr double kCleanAcc = 0.99;
constexpr double kDistortedAcc = 0.90;
constexpr double kMinSnr = 20.0;
constexpr double kTrainSeconds = 30.0 * 60.0;
constexpr double kCropAcc50 = 0.95;
constexpr double kCropAcc90 = 0.90;
constexpr double kAblationGap = 0.15;
constexpr double kRandomGuessTol = 0.10;
constexpr std::size_t kTestClips = 32;
constexpr std::size_t kDpEvalIters = 32;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& note) {
    pass = pass && ok;
    notes.push_back(ok ? note : "[fail] " + note);
  }
};

// ------------------------------------------------------------ trained models

struct TrainedModel {
  std::optional<Checkpoint> ckpt;
  fs::path path;
  double train_seconds = 0.0;
  bool cached = false;
};

class ModelCache {
 public:
  ModelCache(fs::path dir, bool fresh) : dir_(std::move(dir)), fresh_(fresh) { fs::create_directories(dir_); }

  // Cache entries are a checkpoint plus a meta file: descriptor, step count,
  // distortion-layer flag, training seed and wall time in seconds.
  const TrainedModel& get(const std::string& name, const trainer::TrainConfig& cfg) {
    if (auto it = entries_.find(name); it != entries_.end()) return it->second;
    TrainedModel tm;
    tm.path = dir_ / (name + ".ckpt");
    const fs::path meta = dir_ / (name + ".meta");
    const std::string want = meta_key(cfg);
    if (!fresh_ && fs::exists(tm.path) && fs::exists(meta)) {
      std::istringstream is(slurp(meta));
      std::string key, secs;
      std::getline(is, key);
      std::getline(is, secs);
      if (key == want) {
        try {
          tm.ckpt = load_checkpoint(tm.path, cfg.arch);
          if (tm.ckpt->step == cfg.steps) {
            tm.train_seconds = std::stod(secs);
            tm.cached = true;
          }
        } catch (const std::exception&) {
        }
      }
    }
    if (!tm.cached) {
      std::fprintf(stderr, "training %s (%zu steps)\n", name.c_str(), cfg.steps);
      const auto t0 = Clock::now();
      trainer::TrainResult r = trainer::train(cfg, [&](const trainer::StepLog& s) {
        if (s.step % 200 == 0) std::fprintf(stderr, "  %s %s\n", name.c_str(), trainer::format_log_row(s).c_str());
        return true;
      });
      tm.train_seconds = seconds_since(t0);
      tm.ckpt = std::move(r.checkpoint);
      save_checkpoint(*tm.ckpt, tm.path);
      spit(meta, want + "\n" + fmt("%.3f", tm.train_seconds) + "\n");
    }
    return entries_.emplace(name, std::move(tm)).first->second;
  }

 private:
  static std::string meta_key(const trainer::TrainConfig& c) {
    return c.arch.descriptor() + " steps=" + std::to_string(c.steps) +
           " dp=" + std::to_string(c.use_distortion_layer) + " seed=" + std::to_string(c.seed);
  }

  fs::path dir_;
  bool fresh_;
  std::map<std::string, TrainedModel> entries_;
};

trainer::TrainConfig full_config() { return trainer::desk_scale_config(); }

trainer::TrainConfig ablation_config() {
  trainer::TrainConfig c = trainer::desk_scale_config();
  c.use_distortion_layer = false;
  return c;
}

const std::vector<AudioClip>& test_set() {
  static const std::vector<AudioClip> t = trainer::synthetic_test_set(kTestClips);
  return t;
}

struct HeldOut {
  double clean_acc = 0.0, dp_acc = 0.0, snr = 0.0;
};

HeldOut held_out(const model::Model& m) {
  HeldOut h;
  const auto& test = test_set();
  const double n = static_cast<double>(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const WatermarkBits w = eval::eval_watermark(0, i, m.arch().wm_len);
    const AudioClip aw = model::embed(m, test[i], w);
    h.clean_acc += metrics::bit_acc(w, model::extract(m, aw)) / n;
    h.dp_acc += metrics::bit_acc(w, model::extract(m, distortion::apply(aw, distortion::DistortionSpec::dp(kDpEvalIters)))) / n;
    h.snr += metrics::snr(test[i], aw) / n;
  }
  return h;
}

// ------------------------------------------------------------ criteria

Verdict dsp_fidelity() {
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AudioClip a = synth_test_signal(seed, 1.0);
    const AudioClip b = dsp::istft(dsp::stft(a));
    if (b.size() != a.size()) {
      worst = INFINITY;
      break;
    }
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.samples[i] - b.samples[i]));
  }
  const double secs = seconds_since(t0);
  v.require(worst <= kRoundTripMaxErr, "max abs err " + fmt("%.3g", worst) + " (<= 1e-6)");
  v.require(secs < kRoundTripSeconds, fmt("%.2f s", secs) + " (< 5 s)");
  return v;
}

Verdict amplitude_table() {
  Verdict v;
  const double p[] = {0.2, 0.4, 0.6, 0.8};
  const double expected[] = {1.9382, 4.4368, 7.9589, 13.9790};
  const AudioClip a = synth_test_signal(1, 1.0);
  for (int i = 0; i < 4; ++i) {
    const double got = metrics::snr(a, distortion::apply(a, distortion::DistortionSpec::amplitude(p[i])));
    v.require(std::abs(got - expected[i]) <= kAmplitudeTol, "p=" + fmt("%.1f", p[i]) + " " + fmt("%.4f dB", got));
  }
  return v;
}

Verdict noise_calibration() {
  Verdict v;
  double worst = 0.0;
  for (double target : {20.0, 25.0, 30.0, 35.0, 40.0})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const AudioClip a = synth_test_signal(100 + seed, 1.0);
      const double got = metrics::snr(a, distortion::apply(a, distortion::DistortionSpec::noise(target, seed)));
      worst = std::max(worst, std::abs(got - target));
    }
  v.require(worst <= kNoiseTol, "max |measured - target| " + fmt("%.4f dB", worst) + " (<= 0.05)");
  return v;
}

ad::Tensor<double> random_tensor(ad::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  ad::Tensor<double> t(std::move(s));
  Rng rng(seed);
  for (auto& x : t.values()) x = rng.uniform(lo, hi);
  return t;
}

// Values in [0.1, 1] with random sign, away from the kinks of relu and |.|.
ad::Tensor<double> away_from_zero(ad::Shape s, std::uint64_t seed) {
  ad::Tensor<double> t = random_tensor(std::move(s), seed, 0.1, 1.0);
  Rng rng(seed + 99);
  for (auto& x : t.values())
    if (rng.uniform() < 0.5) x = -x;
  return t;
}

// Reverse-mode parameter gradients of a scalar loss against Richardson
// extrapolated central differences; denominators floored at 1e-2 (atol 1e-5
// at rtol 1e-3).
double param_grad_err(std::vector<ad::Var<double>> params, const std::function<ad::Var<double>()>& loss,
                      std::size_t per_param, double h = 2e-6) {
  for (auto& p : params) p.zero_grad();
  ad::backward(loss());
  Rng rng(11);
  double worst = 0.0;
  for (auto& p : params) {
    const ad::Tensor<double> g = p.grad();
    for (std::size_t c = 0; c < std::min(per_param, p.size()); ++c) {
      const std::size_t i =
          per_param >= p.size() ? c : static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(p.size()) - 1));
      const double x0 = p.value()[i];
      auto central = [&](double step) {
        p.mutable_value()[i] = x0 + step;
        const double up = loss().value().item();
        p.mutable_value()[i] = x0 - step;
        const double down = loss().value().item();
        p.mutable_value()[i] = x0;
        return (up - down) / (2 * step);
      };
      const double numeric = (4 * central(h / 2) - central(h)) / 3;
      const double denom = std::max({std::abs(numeric), std::abs(g[i]), 1e-2});
      worst = std::max(worst, std::abs(numeric - g[i]) / denom);
    }
  }
  return worst;
}

Verdict gradient_integrity() {
  using namespace twm::ad;
  using Fn = std::function<Var<double>(const std::vector<Var<double>>&)>;
  Verdict v;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  auto op = [&](const std::string& name, const Fn& f, std::vector<Tensor<double>> in) {
    GradCheckOptions o;
    o.max_coords = 48;
    const double e = grad_check(f, std::move(in), o).max_rel_err;
    ++checked;
    if (!(e <= worst)) {
      worst = e;
      worst_name = name;
    }
  };

  const Tensor<double> a = away_from_zero(Shape{2, 3, 4}, 1), b = away_from_zero(Shape{2, 3, 4}, 2);
  op("add", [](const auto& x) { return add(x[0], x[1]); }, {a, b});
  op("sub", [](const auto& x) { return sub(x[0], x[1]); }, {a, b});
  op("mul", [](const auto& x) { return mul(x[0], x[1]); }, {a, b});
  op("scale", [](const auto& x) { return scale(x[0], -3.0); }, {a});
  op("sum", [](const auto& x) { return sum(x[0]); }, {a});
  op("mean", [](const auto& x) { return mean(x[0]); }, {a});
  op("mse", [&](const auto& x) { return mse(x[0], b); }, {a});
  op("mse2", [](const auto& x) { return mse(x[0], x[1]); }, {a, b});
  op("weighted_sum", [](const auto& x) { return weighted_sum<double>({sum(x[0]), mean(x[1])}, {0.3, 2.0}); }, {a, b});
  op("reshape", [](const auto& x) { return reshape(x[0], Shape{6, 4}); }, {a});
  op("abs_max", [](const auto& x) { return abs_max(x[0]); }, {a});
  op("div_scalar", [](const auto& x) { return div_scalar(x[0], abs_max(x[1])); }, {a, b});
  op("relu", [](const auto& x) { return relu(x[0]); }, {a});
  op("leaky_relu", [](const auto& x) { return leaky_relu(x[0], 0.2); }, {a});
  op("sigmoid", [](const auto& x) { return sigmoid(x[0]); }, {a});
  op("tanh", [](const auto& x) { return tanh(x[0]); }, {a});
  op("clamp", [](const auto& x) { return clamp(x[0], -0.5, 0.5); }, {a});
  op("log", [](const auto& x) { return log(x[0]); }, {random_tensor(Shape{10}, 3, 0.2, 2.0)});
  op("conv2d", [](const auto& x) { return conv2d(x[0], x[1], x[2]); },
     {random_tensor(Shape{3, 6, 11}, 4), random_tensor(Shape{4, 3, 3, 3}, 5), random_tensor(Shape{4}, 6)});
  op("linear", [](const auto& x) { return linear(x[0], x[1], x[2]); },
     {random_tensor(Shape{3, 4}, 7), random_tensor(Shape{5, 4}, 8), random_tensor(Shape{5}, 9)});
  op("matmul_const", [&](const auto& x) { return matmul_const(x[0], random_tensor(Shape{6, 4}, 10)); },
     {random_tensor(Shape{3, 4}, 11)});
  op("gated_conv", [](const auto& x) { return gated_conv(x[0], x[1], x[2], x[3], x[4]); },
     {random_tensor(Shape{2, 4, 5}, 12), random_tensor(Shape{3, 2, 3, 3}, 13), random_tensor(Shape{3}, 14),
      random_tensor(Shape{3, 2, 3, 3}, 15), random_tensor(Shape{3}, 16)});
  op("instance_norm", [](const auto& x) { return instance_norm(x[0], x[1], x[2]); },
     {random_tensor(Shape{2, 4, 5}, 17), Tensor<double>(Shape{2}, std::vector<double>{1.3, -0.7}),
      Tensor<double>(Shape{2}, std::vector<double>{0.2, 0.4})});
  op("pad_time_replicate", [](const auto& x) { return pad_time_replicate(x[0], 2); }, {a});
  op("crop_time", [](const auto& x) { return crop_time(x[0], 1, 2); }, {a});
  op("mean_time", [](const auto& x) { return mean_time(x[0]); }, {random_tensor(Shape{2, 5, 3}, 18)});
  op("repeat_time", [](const auto& x) { return repeat_time(x[0], 4); }, {random_tensor(Shape{2, 1, 3}, 19)});
  op("avg_pool_all", [](const auto& x) { return avg_pool_all(x[0]); }, {random_tensor(Shape{3, 4, 5}, 20)});
  op("concat_channels", [](const auto& x) { return concat_channels<double>({x[0], x[1]}); },
     {random_tensor(Shape{2, 3, 4}, 21), random_tensor(Shape{1, 3, 4}, 22)});
  {
    Rng rng(23);
    ParamStore<double> store;
    ParamBuilder<double> pb(store, &rng);
    GatedBlock<double> gated(pb, "g", 2, 3);
    ReluBlock<double> relu_block(pb, "r", 2, 3);
    op("GatedBlock", [&](const auto& x) { return gated(x[0]); }, {random_tensor(Shape{2, 4, 5}, 24)});
    op("ReluBlock", [&](const auto& x) { return relu_block(x[0]); }, {random_tensor(Shape{2, 5, 6}, 25)});
  }

  // Signal-processing nodes on a short STFT.
  dsp::StftConfig cfg;
  cfg.n_fft = 64;
  cfg.hop = 16;
  cfg.win_len = 64;
  const std::size_t n = 200;
  const Tensor<double> sig = random_tensor(Shape{n}, 26);
  const Tensor<double> spec = dsp::stft(constant(sig), cfg).value();
  const Tensor<double> mag = dsp::magnitude(dsp::stft(constant(sig), cfg)).value();
  Tensor<double> cp(mag.shape()), sp(mag.shape());
  for (std::size_t i = 0; i < mag.size(); ++i) {
    cp[i] = std::cos(0.1 * static_cast<double>(i));
    sp[i] = std::sin(0.1 * static_cast<double>(i));
  }
  const dsp::MelBasis<double> basis(dsp::mel_filterbank(dsp::MelConfig{12, 0.0, -1.0}, cfg.n_fft, 8000));
  op("stft", [&](const auto& x) { return dsp::stft(x[0], cfg); }, {sig});
  op("istft", [&](const auto& x) { return dsp::istft(x[0], cfg, n); }, {spec});
  op("magnitude", [&](const auto& x) { return dsp::magnitude(x[0]); }, {spec});
  op("with_phase", [&](const auto& x) { return dsp::istft(dsp::with_phase(x[0], cp, sp), cfg, n); }, {mag});
  op("mel", [&](const auto& x) { return dsp::mel(x[0], basis); }, {mag});
  op("mel_inverse", [&](const auto& x) { return dsp::mel_inverse(x[0], basis); },
     {dsp::mel(constant(mag), basis).value()});
  op("griffin_lim", [&](const auto& x) { return dsp::griffin_lim(x[0], cfg, 3, n); }, {mag});
  op("peak_normalize", [](const auto& x) { return distortion::peak_normalize(x[0]); }, {away_from_zero(Shape{50}, 27)});
  op("dp_train", [&](const auto& x) { return distortion::dp_train(x[0], basis, cfg, 2); }, {sig});

  v.require(worst <= kGradRelErr, std::to_string(checked) + " ops, worst " + worst_name + " " + fmt("%.2g", worst));

  // Composed embed -> DP(K=2) -> extract over every generator parameter, default STFT.
  model::Architecture arch = full_config().arch;
  arch.width = 2;
  arch.carrier_blocks = 2;
  arch.embedder_blocks = 2;
  arch.extractor_blocks = 2;
  const model::Networks<double> net(arch, 14);
  const dsp::MelBasis<double> full_basis(dsp::mel_filterbank(dsp::MelConfig{}, arch.stft.n_fft, 22050));
  const WatermarkBits w = eval::eval_watermark(3, 0, arch.wm_len);
  AudioClip clip = synth_test_signal(4, 1.0);
  clip.samples.resize(2048);
  const Tensor<double> audio(Shape{clip.size()}, clip.samples);
  auto loss = [&] {
    const auto aw = net.embed_audio(constant(audio), w);
    return ad::add(model::embedding_loss(aw, audio),
                   model::watermark_loss(net.extract_audio(distortion::dp_train(aw, full_basis, arch.stft, 2)), w));
  };
  const double composed = param_grad_err(net.generator_params(), loss, 3);
  v.require(composed <= kGradRelErr, "embed->DP(2)->extract " + fmt("%.3g", composed));
  const double secs = seconds_since(t0);
  v.require(secs < kGradSeconds, fmt("%.1f s", secs) + " (< 120 s)");
  return v;
}

Verdict exact_invariants() {
  Verdict v;
  bool identity = true;
  for (std::size_t frames : {1u, 2u, 3u, 7u, 87u, 100u, 1000u}) {
    const ad::Tensor<double> fd = random_tensor(ad::Shape{4, 1, 33}, frames);
    const ad::Tensor<float> ff = fd.cast<float>();
    identity = identity && std::ranges::equal(ad::mean_time(ad::repeat_time(ad::constant(fd), frames)).value().values(),
                                              fd.values());
    identity = identity && std::ranges::equal(ad::mean_time(ad::repeat_time(ad::constant(ff), frames)).value().values(),
                                              ff.values());
  }
  v.require(identity, "mean_time(repeat_time(x)) == x for 1..1000 frames");

  // Constant-frame magnitudes: deleting frames never changes the hard bits.
  bool invariant = true;
  std::size_t cases = 0;
  const model::Architecture arch = full_config().arch;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const model::Model m(arch, seed);
    const ad::Tensor<double> row = random_tensor(ad::Shape{arch.bins()}, 50 + seed, 0.0, 2.0);
    auto tiled = [&](std::size_t frames) {
      dsp::Matrix mag(ad::Shape{frames, arch.bins()});
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t k = 0; k < arch.bins(); ++k) mag[t * arch.bins() + k] = row[k];
      return mag;
    };
    const std::string ref = model::extract_magnitude(m, tiled(87)).str();
    for (std::size_t kept : {1u, 2u, 5u, 17u, 40u, 64u, 86u}) {
      invariant = invariant && model::extract_magnitude(m, tiled(kept)).str() == ref;
      ++cases;
    }
  }
  v.require(invariant, std::to_string(cases) + " frame deletions, hard bits identical");
  return v;
}

// Runs the CLI and captures stdout.
std::pair<int, std::string> run_cli(const std::string& args) {
  const std::string cmd = std::string(TWM_BIN) + " " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

Verdict desk_training(ModelCache& cache, const fs::path& scratch) {
  Verdict v;
  const TrainedModel& full = cache.get("full", full_config());
  const HeldOut h = held_out(full.ckpt->model);
  v.require(h.clean_acc >= kCleanAcc, "clean ACC " + fmt("%.4f", h.clean_acc) + " (>= 0.99)");
  v.require(h.dp_acc >= kDistortedAcc, "DP ACC " + fmt("%.4f", h.dp_acc) + " (>= 0.90)");
  v.require(h.snr >= kMinSnr, "SNR " + fmt("%.2f dB", h.snr) + " (>= 20)");
  v.require(full.train_seconds < kTrainSeconds,
            "train " + fmt("%.0f s", full.train_seconds) + (full.cached ? " (cached)" : "") + " (< 1800 s)");

  const TrainedModel& rerun = cache.get("full_rerun", full_config());
  v.require(slurp(full.path) == slurp(rerun.path), "rerun checkpoint byte-identical");

  // End to end through the command-line tool.
  write_wav(test_set()[0], scratch / "in.wav");
  const auto e = run_cli("embed --model " + q(full.path) + " --wm 1011010010 " + q(scratch / "in.wav") + " " +
                         q(scratch / "out.wav"));
  const auto x = run_cli("extract --model " + q(full.path) + " " + q(scratch / "out.wav"));
  v.require(e.first == 0 && x.first == 0 && x.second.rfind("1011010010\n", 0) == 0,
            "cli embed/extract 1011010010 -> " + x.second.substr(0, x.second.find('\n')));
  return v;
}

Verdict crop_robustness(ModelCache& cache) {
  Verdict v;
  const auto& m = cache.get("full", full_config()).ckpt->model;
  using distortion::CropPosition;
  const auto pts = eval::crop_curve(m, test_set(), {0.5, 0.9},
                                    {CropPosition::front, CropPosition::middle, CropPosition::behind});
  for (const auto& p : pts) {
    const double bound = p.ratio == 0.5 ? kCropAcc50 : kCropAcc90;
    v.require(p.acc >= bound, fmt("%.0f%% ", p.ratio * 100) + distortion::position_name(p.position) + " " +
                                  fmt("%.4f", p.acc) + fmt(" (>= %.2f)", bound));
  }
  return v;
}

Verdict ablation(ModelCache& cache) {
  Verdict v;
  const HeldOut full = held_out(cache.get("full", full_config()).ckpt->model);
  const HeldOut dbwm = held_out(cache.get("dbwm", ablation_config()).ckpt->model);
  v.require(full.dp_acc - dbwm.dp_acc >= kAblationGap, "DP ACC full " + fmt("%.4f", full.dp_acc) + " vs ablation " +
                                                           fmt("%.4f", dbwm.dp_acc) + " (gap >= 0.15)");
  v.notes.push_back("ablation clean ACC " + fmt("%.4f", dbwm.clean_acc));
  return v;
}

Verdict detection(ModelCache& cache) {
  Verdict v;
  const auto& m = cache.get("full", full_config()).ckpt->model;
  std::size_t marked_hits = 0, clean_misses = 0;
  double clean_seg = 0.0;
  std::size_t clean_segs = 0;
  for (std::size_t i = 0; i < test_set().size(); ++i) {
    const WatermarkBits w = eval::eval_watermark(7, i, m.arch().wm_len);
    marked_hits += model::detect(m, model::embed(m, test_set()[i], w), w, 0.9, 5).detected;
    const model::Detection d = model::detect(m, test_set()[i], w, 0.9, 5);
    clean_misses += !d.detected;
    for (double a : d.segment_acc) {
      clean_seg += a;
      ++clean_segs;
    }
  }
  clean_seg /= static_cast<double>(clean_segs);
  const std::size_t n = test_set().size();
  v.require(marked_hits == n, "watermarked DETECTED " + std::to_string(marked_hits) + "/" + std::to_string(n));
  v.require(clean_misses == n, "clean NOT-DETECTED " + std::to_string(clean_misses) + "/" + std::to_string(n));
  v.require(std::abs(clean_seg - 0.5) <= kRandomGuessTol, "clean segment ACC " + fmt("%.4f", clean_seg) + " (0.5 +- 0.1)");
  return v;
}

Verdict checkpoint_integrity(const fs::path& scratch) {
  Verdict v;
  trainer::TrainConfig cfg = full_config();
  cfg.steps = 2;
  cfg.clip_seconds = 0.25;
  cfg.dataset.synthetic_clips = cfg.batch_size;
  const Checkpoint ck = trainer::train(cfg).checkpoint;
  const fs::path a = scratch / "a.ckpt", b = scratch / "b.ckpt";
  save_checkpoint(ck, a);
  save_checkpoint(load_checkpoint(a), b);
  const std::string bytes = slurp(a);
  v.require(!bytes.empty() && bytes == slurp(b), "save/load/save byte-identical (" + std::to_string(bytes.size()) + " B)");

  auto kind_of = [&](const std::string& data, const std::optional<model::Architecture>& expected = std::nullopt) {
    const fs::path p = scratch / "bad.ckpt";
    spit(p, data);
    try {
      load_checkpoint(p, expected);
    } catch (const CheckpointError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  auto expect = [&](const char* label, int got, CheckpointErrorKind want) {
    v.require(got == static_cast<int>(want), label);
  };
  std::string magic = bytes, version = bytes;
  magic[0] = 'X';
  version[4] = static_cast<char>(version[4] + 1);
  model::Architecture other = cfg.arch;
  other.wm_len = 16;
  try {
    load_checkpoint(scratch / "missing.ckpt");
    v.require(false, "unreadable");
  } catch (const CheckpointError& e) {
    v.require(e.kind() == CheckpointErrorKind::unreadable, "unreadable");
  }
  expect("bad_magic", kind_of(magic), CheckpointErrorKind::bad_magic);
  expect("version_mismatch", kind_of(version), CheckpointErrorKind::version_mismatch);
  expect("descriptor_mismatch", kind_of(bytes, other), CheckpointErrorKind::descriptor_mismatch);
  expect("truncated", kind_of(bytes.substr(0, bytes.size() / 2)), CheckpointErrorKind::truncated);
  expect("corrupt", kind_of(bytes + '\0'), CheckpointErrorKind::corrupt);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path cache_dir = TWM_ACCEPTANCE_CACHE;
  bool fresh = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--fresh") {
      fresh = true;
    } else if (arg == "--cache" && i + 1 < argc) {
      cache_dir = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::istringstream is(argv[++i]);
      for (std::string tok; std::getline(is, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--fresh] [--cache DIR] [--only N,...]\n");
      return 1;
    }
  }

  ModelCache cache(cache_dir, fresh);
  const fs::path scratch = cache_dir / "scratch";
  fs::create_directories(scratch);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"DSP round trip", dsp_fidelity},
      {"amplitude scaling SNRs", amplitude_table},
      {"noise calibration", noise_calibration},
      {"gradient checks", gradient_integrity},
      {"exact invariants", exact_invariants},
      {"desk-scale training", [&] { return desk_training(cache, scratch); }},
      {"crop robustness", [&] { return crop_robustness(cache); }},
      {"distortion layer ablation", [&] { return ablation(cache); }},
      {"detection protocol", [&] { return detection(cache); }},
      {"checkpoint integrity", [&] { return checkpoint_integrity(scratch); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    failed += !v.pass;
    std::string detail;
    for (const auto& n : v.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch);
  return failed == 0 ? 0 : 1;
}
