#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "twm/ad/optim.hpp"
#include "twm/model.hpp"

namespace twm {

enum class CheckpointErrorKind { unreadable, bad_magic, version_mismatch, descriptor_mismatch, truncated, corrupt };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr char kCheckpointMagic[4] = {'T', 'W', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Optimizer state for both players.
struct TrainingState {
  ad::AdamState<float> generator;
  ad::AdamState<float> discriminator;
};

struct Checkpoint {
  model::Model model;
  std::optional<TrainingState> state;
  std::uint64_t step = 0;
};

/// Layout (all little-endian): magic "TWM1", u32 version, u32 length +
/// descriptor text, u64 step, u32 parameter count, then per parameter u32
/// name length + name, u32 rank, u64 dims, f32 values; u8 Adam-state flag,
/// and when set, for generator then discriminator: u64 t, f64 lr, beta1,
/// beta2, eps, then m and v for each parameter of that player as f32.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// `expected`, when given, must equal the stored architecture.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<model::Architecture>& expected = std::nullopt);

}  // namespace twm
