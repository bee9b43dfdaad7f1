#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "twm/audio_io.hpp"
#include "twm/checkpoint.hpp"
#include "twm/config.hpp"
#include "twm/distortion.hpp"
#include "twm/error.hpp"
#include "twm/evalharness.hpp"
#include "twm/metrics.hpp"
#include "twm/model.hpp"
#include "twm/trainer.hpp"

namespace fs = std::filesystem;
using namespace twm;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Payload {
  std::string bits;
  std::string text;

  void add_to(CLI::App* cmd) {
    auto* b = cmd->add_option("--wm", bits, "Watermark as a bitstring of 0/1 characters");
    auto* t = cmd->add_option("--wm-text", text, "Watermark as UTF-8 text hashed to the model's bit count");
    b->excludes(t);
  }

  WatermarkBits resolve(std::size_t n) const {
    if (bits.empty() && text.empty()) throw UsageError("--wm or --wm-text is required");
    if (!text.empty()) return WatermarkBits::from_text(text, n);
    WatermarkBits w;
    try {
      w = WatermarkBits::parse(bits);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--wm: ") + e.what());
    }
    if (w.size() != n)
      throw UsageError("--wm: " + std::to_string(w.size()) + " bits given, model expects " + std::to_string(n));
    return w;
  }
};

model::Model load_model(const fs::path& path) {
  if (path.empty()) throw UsageError("--model is required");
  return load_checkpoint(path).model;
}

std::vector<AudioClip> eval_set(const std::string& dir, std::size_t clips) {
  if (dir.empty()) return trainer::synthetic_test_set(clips);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("--test-dir " + dir + ": no .wav files");
  std::vector<AudioClip> out;
  for (const auto& f : files) {
    AudioClip c = read_wav(f);
    if (c.sample_rate != 22050) c = resample(c, 22050);
    out.push_back(std::move(c));
  }
  return out;
}

void print_log_row(const trainer::StepLog& r) { std::cerr << trainer::format_log_row(r) << '\n'; }

std::string soft_str(const WatermarkBits& w) {
  std::string s;
  char buf[32];
  for (std::size_t i = 0; i < w.soft.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.4f", i ? " " : "", w.soft[i]);
    s += buf;
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twm: speech watermarking that survives voice cloning"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  // synth-data
  std::string synth_out;
  std::size_t synth_count = 64;
  double synth_seconds = 1.0;
  std::uint64_t synth_seed = 0;
  int synth_rate = 22050;
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic speech-like corpus of WAV files");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of clips")->check(CLI::Range(std::size_t{1}, std::size_t{1000000}));
  synth->add_option("--seconds", synth_seconds, "Clip duration in seconds")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Seed of the first clip");
  synth->add_option("--rate", synth_rate, "Sample rate in Hz")->check(CLI::Range(1000, 192000));

  // train
  std::string train_config;
  std::vector<std::string> train_sets;
  std::optional<std::size_t> train_steps;
  std::optional<std::uint64_t> train_seed;
  std::string train_data, train_model, train_log;
  bool train_no_dp = false;
  std::size_t log_every = 100;
  auto* train = app.add_subcommand("train", "Train embedder, extractor and discriminator");
  train->add_option("--config", train_config, "Config file of key = value lines")->check(CLI::ExistingFile);
  train->add_option("--set", train_sets, "Override one config key (key=value); repeatable");
  train->add_option("--steps", train_steps, "Training steps");
  train->add_option("--seed", train_seed, "Training seed");
  train->add_option("--data", train_data, "Directory of training WAV files (default: synthetic corpus)");
  train->add_flag("--no-distortion-layer", train_no_dp, "Train without the distortion layer (DBWM ablation)");
  train->add_option("--model", train_model, "Checkpoint to write");
  train->add_option("--log", train_log, "Training log CSV to write");
  train->add_option("--log-every", log_every, "Print every Nth log row to stderr (0 disables)");

  // embed
  std::string model_path, in_path, out_path;
  Payload embed_wm;
  auto* embed = app.add_subcommand("embed", "Embed a watermark into a WAV file");
  embed->add_option("--model", model_path, "Trained checkpoint")->required();
  embed_wm.add_to(embed);
  embed->add_option("input", in_path, "Input WAV")->required();
  embed->add_option("output", out_path, "Output WAV")->required();

  // extract
  auto* extract = app.add_subcommand("extract", "Print the watermark bits and soft values of a WAV file");
  extract->add_option("--model", model_path, "Trained checkpoint")->required();
  extract->add_option("input", in_path, "Input WAV")->required();

  // detect
  Payload detect_wm;
  double threshold = 0.9;
  std::size_t segments = 5;
  auto* detect = app.add_subcommand("detect", "Segment-wise detection of a known watermark");
  detect->add_option("--model", model_path, "Trained checkpoint")->required();
  detect_wm.add_to(detect);
  detect->add_option("--threshold", threshold, "Per-segment accuracy threshold")->check(CLI::Range(0.0, 1.0));
  detect->add_option("--segments", segments, "Number of segments")->check(CLI::Range(std::size_t{1}, std::size_t{1000}));
  detect->add_option("input", in_path, "Input WAV")->required();

  // attack-sim
  std::string pipeline;
  std::uint64_t attack_seed = 0;
  auto* attack = app.add_subcommand("attack-sim", "Apply a distortion (dp_pipeline, crop:0.5:front, ...) to a WAV file");
  attack->add_option("--pipeline", pipeline, "Distortion spec, e.g. dp, dp_pipeline:32, gaussian_noise:25")->required();
  attack->add_option("--seed", attack_seed, "Seed for random distortions");
  attack->add_option("input", in_path, "Input WAV")->required();
  attack->add_option("output", out_path, "Output WAV")->required();

  // evaluation commands share these
  std::string test_dir;
  std::size_t clips = 32;
  std::uint64_t eval_seed = 0;
  std::string report;
  auto eval_common = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_path, "Trained checkpoint")->required();
    cmd->add_option("--out", report, "CSV report to write")->required();
    cmd->add_option("--test-dir", test_dir, "Directory of test WAV files (default: held-out synthetic clips)");
    cmd->add_option("--clips", clips, "Synthetic test clips")->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
    cmd->add_option("--seed", eval_seed, "Seed for the evaluation watermarks");
  };
  std::vector<std::string> specs;
  auto* eval_rob = app.add_subcommand("eval-robustness", "Accuracy and SNR under common preprocessing");
  eval_common(eval_rob);
  eval_rob->add_option("--spec", specs, "Distortion spec; repeatable (default: the standard table)");

  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  auto* eval_crop = app.add_subcommand("eval-crop", "Accuracy against cropping ratio and position");
  eval_common(eval_crop);
  eval_crop->add_option("--ratios", ratios, "Crop ratios")->delimiter(',')->check(CLI::Range(0.0, 0.99));

  double band_width = 0.1;
  auto* eval_mask = app.add_subcommand("eval-mask", "Frequency band masking study");
  eval_common(eval_mask);
  eval_mask->add_option("--band-width", band_width, "Band width as a fraction of the bins")->check(CLI::Range(0.01, 1.0));

  auto* eval_over = app.add_subcommand("eval-overwrite", "Second embedding with the same model");
  eval_common(eval_over);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) {
      fs::create_directories(synth_out);
      for (std::size_t i = 0; i < synth_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "clip_%05zu.wav", i);
        write_wav(synth_test_signal(synth_seed + i, synth_seconds, synth_rate), fs::path(synth_out) / name);
      }
      std::cout << "wrote " << synth_count << " clips to " << synth_out << '\n';
    } else if (*train) {
      config::CliConfig cfg;
      if (!train_config.empty()) config::apply_file(cfg, train_config);
      for (const auto& s : train_sets) config::apply_assignment(cfg, s);
      if (train_steps) config::set(cfg, "steps", std::to_string(*train_steps));
      if (train_seed) cfg.train.seed = *train_seed;
      if (!train_data.empty()) cfg.train.dataset.wav_dir = train_data;
      if (train_no_dp) cfg.train.use_distortion_layer = false;
      if (!train_model.empty()) cfg.model_path = train_model;
      if (!train_log.empty()) cfg.log_path = train_log;
      if (cfg.model_path.empty()) throw UsageError("--model (or config key 'model') is required");
      try {
        cfg.train.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("training config: ") + e.what());
      }
      const auto result = trainer::train(cfg.train, [&](const trainer::StepLog& r) {
        if (log_every && (r.step % log_every == 0 || r.step + 1 == cfg.train.steps)) print_log_row(r);
        return true;
      });
      save_checkpoint(result.checkpoint, cfg.model_path);
      if (!cfg.log_path.empty()) trainer::write_log_csv(result.log, cfg.log_path);
      std::cout << "saved " << cfg.model_path.string() << " after " << result.checkpoint.step << " steps\n";
    } else if (*embed) {
      const model::Model m = load_model(model_path);
      const WatermarkBits w = embed_wm.resolve(m.arch().wm_len);
      const AudioClip a = read_wav(in_path);
      const AudioClip aw = model::embed(m, a, w);
      write_wav(aw, out_path);
      std::cout << w.str() << '\n';
    } else if (*extract) {
      const model::Model m = load_model(model_path);
      const WatermarkBits w = model::extract(m, read_wav(in_path));
      std::cout << w.str() << '\n' << soft_str(w) << '\n';
    } else if (*detect) {
      const model::Model m = load_model(model_path);
      const WatermarkBits w = detect_wm.resolve(m.arch().wm_len);
      const model::Detection d = model::detect(m, read_wav(in_path), w, threshold, segments);
      std::cout << (d.detected ? "DETECTED" : "NOT-DETECTED") << '\n';
      for (std::size_t i = 0; i < d.segment_acc.size(); ++i)
        std::printf("segment %zu acc %.4f\n", i, d.segment_acc[i]);
    } else if (*attack) {
      distortion::DistortionSpec spec;
      try {
        spec = distortion::DistortionSpec::parse(pipeline == "dp" ? "dp_pipeline" : pipeline);
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--pipeline: ") + e.what());
      }
      if (attack->count("--seed")) spec.seed = attack_seed;
      const AudioClip a = read_wav(in_path);
      const AudioClip out = distortion::apply(a, spec);
      write_wav(out, out_path);
      std::cout << spec.str() << ": " << a.size() << " -> " << out.size() << " samples\n";
    } else {
      const model::Model m = load_model(model_path);
      const std::vector<AudioClip> test = eval_set(test_dir, clips);
      std::string csv;
      if (*eval_rob) {
        std::vector<distortion::DistortionSpec> list;
        for (const auto& s : specs) {
          try {
            list.push_back(distortion::DistortionSpec::parse(s));
          } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("--spec: ") + e.what());
          }
        }
        if (list.empty()) list = eval::default_robustness_specs();
        csv = eval::to_csv(eval::robustness_table(m, test, list, eval_seed));
      } else if (*eval_crop) {
        using distortion::CropPosition;
        csv = eval::to_csv(eval::crop_curve(m, test, ratios, {CropPosition::front, CropPosition::middle, CropPosition::behind},
                                            eval_seed));
      } else if (*eval_mask) {
        csv = eval::to_csv(eval::mask_study(m, test, band_width, eval_seed));
      } else {
        csv = eval::to_csv(eval::overwrite_eval(m, test, eval_seed));
      }
      eval::write_text(csv, report);
      std::cout << csv;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const config::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
