#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "twm/trainer.hpp"

namespace twm::config {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a config file can set. Training values start from the
/// desk-scale preset.
struct CliConfig {
  trainer::TrainConfig train = trainer::desk_scale_config();
  std::filesystem::path model_path;  // checkpoint written by train, read by the other commands
  std::filesystem::path log_path;    // training log CSV
  std::filesystem::path out_path;    // report or audio output
};

/// Sets one key. Throws ConfigError naming the key for unknown keys and
/// for values that fail to parse or are out of range.
void set(CliConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; '#' starts a comment; blank lines are ignored.
/// Errors carry the origin and line number.
void apply_text(CliConfig& cfg, const std::string& text, const std::string& origin = "<config>");
void apply_file(CliConfig& cfg, const std::filesystem::path& path);

/// "key=value" as given on the command line.
void apply_assignment(CliConfig& cfg, const std::string& assignment);

/// Every accepted key, in documentation order.
const std::vector<std::string>& keys();

/// Config file text that reproduces cfg.
std::string dump(const CliConfig& cfg);

}  // namespace twm::config
