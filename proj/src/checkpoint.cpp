#include "twm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace twm {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(U));
  }
  void put_str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_floats(const ad::Tensor<float>& t) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.data());
    buf_.insert(buf_.end(), p, p + t.size() * sizeof(float));
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> b, std::string path) : buf_(std::move(b)), path_(std::move(path)) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_str(std::size_t limit) {
    const auto n = get<std::uint32_t>();
    if (n > limit) throw CheckpointError(CheckpointErrorKind::corrupt, path_ + ": implausible string length");
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void get_floats(ad::Tensor<float>& t) {
    need(t.size() * sizeof(float));
    std::memcpy(t.data(), buf_.data() + pos_, t.size() * sizeof(float));
    pos_ += t.size() * sizeof(float);
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrorKind::truncated,
                            path_ + ": checkpoint is truncated (needed " + std::to_string(n) + " more bytes at offset " +
                                std::to_string(pos_) + ")");
  }
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
  std::string path_;
};

void put_adam(Writer& w, const ad::AdamState<float>& s, std::size_t count) {
  w.put<std::uint64_t>(s.t);
  w.put<double>(s.config.lr);
  w.put<double>(s.config.beta1);
  w.put<double>(s.config.beta2);
  w.put<double>(s.config.eps);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.m.size()));
  if (s.m.size() != count && !s.m.empty())
    throw std::invalid_argument("save_checkpoint: optimizer state does not match the parameter count");
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    w.put_floats(s.m[i]);
    w.put_floats(s.v[i]);
  }
}

ad::AdamState<float> get_adam(Reader& r, const std::vector<ad::Var<float>>& params, const std::string& path) {
  ad::AdamState<float> s;
  s.t = r.get<std::uint64_t>();
  s.config.lr = r.get<double>();
  s.config.beta1 = r.get<double>();
  s.config.beta2 = r.get<double>();
  s.config.eps = r.get<double>();
  const auto n = r.get<std::uint32_t>();
  if (n != 0 && n != params.size())
    throw CheckpointError(CheckpointErrorKind::corrupt, path + ": optimizer state has " + std::to_string(n) +
                                                            " entries for " + std::to_string(params.size()) +
                                                            " parameters");
  for (std::uint32_t i = 0; i < n; ++i) {
    s.m.emplace_back(params[i].shape());
    s.v.emplace_back(params[i].shape());
    r.get_floats(s.m.back());
    r.get_floats(s.v.back());
  }
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  for (char c : kCheckpointMagic) w.put<char>(c);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_str(ckpt.model.arch().descriptor());
  w.put<std::uint64_t>(ckpt.step);
  const auto& store = ckpt.model.params();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store.vars()[i].value();
    w.put_str(store.names()[i]);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.put<std::uint64_t>(d);
    w.put_floats(t);
  }
  w.put<std::uint8_t>(ckpt.state ? 1 : 0);
  if (ckpt.state) {
    put_adam(w, ckpt.state->generator, ckpt.model.generator_params().size());
    put_adam(w, ckpt.state->discriminator, ckpt.model.discriminator_params().size());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointErrorKind::unreadable, path.string() + ": cannot open for writing");
  f.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!f) throw CheckpointError(CheckpointErrorKind::unreadable, path.string() + ": write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<model::Architecture>& expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointErrorKind::unreadable, path.string() + ": cannot open checkpoint");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  Reader r(std::move(bytes), name);

  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError(CheckpointErrorKind::bad_magic, name + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::version_mismatch, name + ": checkpoint version " +
                                                                     std::to_string(version) + ", expected " +
                                                                     std::to_string(kCheckpointVersion));
  const std::string desc = r.get_str(4096);
  model::Architecture arch;
  try {
    arch = model::Architecture::parse_descriptor(desc);
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorKind::descriptor_mismatch,
                          name + ": unreadable architecture descriptor: " + e.what());
  }
  if (expected && !(*expected == arch))
    throw CheckpointError(CheckpointErrorKind::descriptor_mismatch, name + ": architecture '" + desc +
                                                                        "' does not match requested '" +
                                                                        expected->descriptor() + "'");
  const auto step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  ad::ParamStore<float> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string pname = r.get_str(256);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError(CheckpointErrorKind::corrupt, name + ": implausible rank for " + pname);
    ad::Shape shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
      total *= shape.back();
    }
    if (total * sizeof(float) > r.remaining())
      throw CheckpointError(CheckpointErrorKind::truncated, name + ": checkpoint is truncated inside " + pname);
    ad::Tensor<float> t(shape);
    r.get_floats(t);
    store.add(pname, std::move(t));
  }
  Checkpoint ck{[&] {
                  try {
                    return model::Model(arch, std::move(store));
                  } catch (const std::exception& e) {
                    throw CheckpointError(CheckpointErrorKind::descriptor_mismatch,
                                          name + ": parameters do not fit the descriptor: " + e.what());
                  }
                }(),
                std::nullopt, step};
  const auto has_state = r.get<std::uint8_t>();
  if (has_state > 1) throw CheckpointError(CheckpointErrorKind::corrupt, name + ": bad optimizer-state flag");
  if (has_state) {
    TrainingState st;
    st.generator = get_adam(r, ck.model.generator_params(), name);
    st.discriminator = get_adam(r, ck.model.discriminator_params(), name);
    ck.state = std::move(st);
  }
  if (!r.at_end()) throw CheckpointError(CheckpointErrorKind::corrupt, name + ": trailing bytes after checkpoint");
  return ck;
}

}  // namespace twm
