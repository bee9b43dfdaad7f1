#include "twm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace twm::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError("config key '" + key + "': value '" + value + "' " + why);
}

double to_real(const std::string& key, const std::string& v, double lo, double hi, bool lo_open = false) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) fail(key, v, "is not a number");
  if ((lo_open ? !(x > lo) : !(x >= lo)) || !(x <= hi)) {
    std::ostringstream os;
    os << "is outside " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
    fail(key, v, os.str());
  }
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v, std::uint64_t lo, std::uint64_t hi) {
  std::uint64_t x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) fail(key, v, "is not a non-negative integer");
  if (x < lo || x > hi) fail(key, v, "is outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(key, v, "is not a boolean (true/false)");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item), 1, 4096));
  if (out.empty()) fail(key, v, "needs at least one width");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string real_str(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

struct Entry {
  std::string key;
  std::function<void(CliConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const CliConfig&)> get;
};

constexpr std::uint64_t kMaxU = std::numeric_limits<std::uint64_t>::max();

#define TWM_UINT(name, field, lo, hi)                                                                          \
  Entry {                                                                                                      \
    name, [](CliConfig& c, const std::string& k, const std::string& v) { c.field = to_uint(k, v, lo, hi); },  \
        [](const CliConfig& c) { return std::to_string(c.field); }                                             \
  }
#define TWM_REAL(name, field, lo, hi, open)                                                                       \
  Entry {                                                                                                         \
    name, [](CliConfig& c, const std::string& k, const std::string& v) { c.field = to_real(k, v, lo, hi, open); }, \
        [](const CliConfig& c) { return real_str(c.field); }                                                      \
  }
#define TWM_PATH(name, field)                                                                         \
  Entry {                                                                                             \
    name, [](CliConfig& c, const std::string&, const std::string& v) { c.field = v; },               \
        [](const CliConfig& c) { return c.field.string(); }                                            \
  }

const std::vector<Entry>& table() {
  static const std::vector<Entry> t = {
      TWM_UINT("seed", train.seed, 0, kMaxU),
      TWM_REAL("clip_seconds", train.clip_seconds, 0.05, 60.0, false),
      TWM_UINT("sample_rate", train.sample_rate, 1000, 192000),
      TWM_UINT("batch_size", train.batch_size, 1, 1024),
      TWM_UINT("steps", train.steps, 1, 100000000),
      Entry{"use_distortion_layer",
            [](CliConfig& c, const std::string& k, const std::string& v) { c.train.use_distortion_layer = to_bool(k, v); },
            [](const CliConfig& c) { return std::string(c.train.use_distortion_layer ? "true" : "false"); }},
      TWM_UINT("gl_train_iters", train.gl_train_iters, 1, 1000),
      TWM_UINT("wm_len", train.arch.wm_len, 1, 4096),
      TWM_UINT("width", train.arch.width, 1, 1024),
      Entry{"disc_widths",
            [](CliConfig& c, const std::string& k, const std::string& v) { c.train.arch.disc_widths = to_sizes(k, v); },
            [](const CliConfig& c) { return join(c.train.arch.disc_widths); }},
      Entry{"kernel",
            [](CliConfig& c, const std::string& k, const std::string& v) {
              const auto x = to_uint(k, v, 1, 15);
              if (x % 2 == 0) fail(k, v, "must be odd");
              c.train.arch.kernel = x;
            },
            [](const CliConfig& c) { return std::to_string(c.train.arch.kernel); }},
      TWM_UINT("carrier_blocks", train.arch.carrier_blocks, 1, 64),
      TWM_UINT("embedder_blocks", train.arch.embedder_blocks, 2, 64),
      TWM_UINT("extractor_blocks", train.arch.extractor_blocks, 2, 64),
      Entry{"n_fft",
            [](CliConfig& c, const std::string& k, const std::string& v) {
              const auto x = to_uint(k, v, 16, 65536);
              if (x % 2 != 0) fail(k, v, "must be even");
              c.train.arch.stft.n_fft = x;
            },
            [](const CliConfig& c) { return std::to_string(c.train.arch.stft.n_fft); }},
      TWM_UINT("hop", train.arch.stft.hop, 1, 65536),
      TWM_UINT("win_len", train.arch.stft.win_len, 1, 65536),
      TWM_UINT("n_mels", train.mel.n_mels, 1, 1024),
      TWM_REAL("f_min", train.mel.f_min, 0.0, 96000.0, false),
      Entry{"f_max",
            [](CliConfig& c, const std::string& k, const std::string& v) {
              // <= 0 means half the sample rate
              c.train.mel.f_max = to_real(k, v, -1.0, 96000.0);
            },
            [](const CliConfig& c) { return real_str(c.train.mel.f_max); }},
      TWM_REAL("lambda_embed", train.weights.embed, 0.0, 1e6, false),
      TWM_REAL("lambda_adv", train.weights.adv, 0.0, 1e6, false),
      TWM_REAL("lambda_wm", train.weights.wm, 0.0, 1e6, false),
      TWM_REAL("lr_generator", train.generator_adam.lr, 0.0, 1.0, true),
      TWM_REAL("lr_discriminator", train.discriminator_adam.lr, 0.0, 1.0, true),
      Entry{"adam_beta1",
            [](CliConfig& c, const std::string& k, const std::string& v) {
              const double b = to_real(k, v, 0.0, 0.999999);
              c.train.generator_adam.beta1 = c.train.discriminator_adam.beta1 = b;
            },
            [](const CliConfig& c) { return real_str(c.train.generator_adam.beta1); }},
      Entry{"adam_beta2",
            [](CliConfig& c, const std::string& k, const std::string& v) {
              const double b = to_real(k, v, 0.0, 0.999999);
              c.train.generator_adam.beta2 = c.train.discriminator_adam.beta2 = b;
            },
            [](const CliConfig& c) { return real_str(c.train.generator_adam.beta2); }},
      Entry{"adam_eps",
            [](CliConfig& c, const std::string& k, const std::string& v) {
              const double e = to_real(k, v, 0.0, 1.0, true);
              c.train.generator_adam.eps = c.train.discriminator_adam.eps = e;
            },
            [](const CliConfig& c) { return real_str(c.train.generator_adam.eps); }},
      TWM_UINT("synthetic_clips", train.dataset.synthetic_clips, 1, 1000000),
      TWM_UINT("synthetic_seed", train.dataset.synthetic_seed, 0, kMaxU),
      TWM_PATH("wav_dir", train.dataset.wav_dir),
      TWM_PATH("model", model_path),
      TWM_PATH("log", log_path),
      TWM_PATH("out", out_path),
  };
  return t;
}

#undef TWM_UINT
#undef TWM_REAL
#undef TWM_PATH

}  // namespace

void set(CliConfig& cfg, const std::string& key, const std::string& value) {
  for (const Entry& e : table())
    if (e.key == key) {
      e.set(cfg, key, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_text(CliConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    try {
      set(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_file(CliConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  apply_text(cfg, os.str(), path.string());
}

void apply_assignment(CliConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::vector<std::string>& keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const Entry& e : table()) out.push_back(e.key);
    return out;
  }();
  return k;
}

std::string dump(const CliConfig& cfg) {
  std::string s;
  for (const Entry& e : table()) s += e.key + " = " + e.get(cfg) + "\n";
  return s;
}

}  // namespace twm::config
