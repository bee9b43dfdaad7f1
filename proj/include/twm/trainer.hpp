#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "twm/checkpoint.hpp"
#include "twm/model.hpp"

namespace twm::trainer {

/// Where training clips come from.
struct DatasetSpec {
  std::filesystem::path wav_dir;  // empty selects the synthetic corpus
  std::size_t synthetic_clips = 64;
  std::uint64_t synthetic_seed = 0;
};

struct TrainConfig {
  std::uint64_t seed = 42;
  double clip_seconds = 1.0;
  int sample_rate = 22050;
  std::size_t batch_size = 4;
  std::size_t steps = 2000;
  bool use_distortion_layer = true;
  std::size_t gl_train_iters = 8;
  model::LossWeights weights;
  model::Architecture arch;
  dsp::MelConfig mel;  // distortion layer filterbank
  ad::AdamConfig generator_adam;
  ad::AdamConfig discriminator_adam;
  DatasetSpec dataset;

  void validate() const;
};

/// Settings used for the desk-scale runs: narrower networks and a larger
/// step size so that 2000 CPU steps suffice.
TrainConfig desk_scale_config();

struct StepLog {
  std::size_t step = 0;
  double l_e = 0, l_adv = 0, l_d = 0, l_w = 0, l_w_hat = 0, l_total = 0;
};

inline constexpr const char* kLogHeader = "step,L_e,L_adv,L_d,L_w,L_w_hat,L_total";
std::string format_log_row(const StepLog& row);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
};

/// Called after every step; returning false stops training early.
using StepCallback = std::function<bool(const StepLog&)>;

/// Loads the training corpus: synthetic clips (one per seed) or every .wav in
/// the directory, cut or resampled to clip_seconds at sample_rate.
std::vector<AudioClip> load_dataset(const TrainConfig& cfg);

TrainResult train(const TrainConfig& cfg, const StepCallback& on_step = {});
TrainResult train(const TrainConfig& cfg, const std::vector<AudioClip>& data, const StepCallback& on_step = {});

void write_log_csv(const std::vector<StepLog>& log, const std::filesystem::path& path);

/// Held-out synthetic clips, disjoint from the training seeds.
std::vector<AudioClip> synthetic_test_set(std::size_t count, double seconds = 1.0, int sample_rate = 22050);

}  // namespace twm::trainer
