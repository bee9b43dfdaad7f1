#include <cstring>
#include <fstream>

#include "doctest.h"
#include "test_helpers.hpp"
#include "twm/audio_io.hpp"
#include "twm/error.hpp"
#include "twm/metrics.hpp"

using namespace twm;

namespace {

// Hand-assembled WAV so the reader is checked against bytes, not against the writer.
std::vector<unsigned char> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                     const std::vector<std::int16_t>& samples, const char* magic = "RIFF") {
  std::vector<unsigned char> b;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  };
  auto put16 = [&](std::uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
  };
  const std::uint32_t data = static_cast<std::uint32_t>(samples.size() * 2);
  b.insert(b.end(), magic, magic + 4);
  put32(36 + data);
  for (char c : std::string("WAVEfmt ")) b.push_back(c);
  put32(16);
  put16(format);
  put16(channels);
  put32(22050);
  put32(22050 * channels * bits / 8);
  put16(channels * bits / 8);
  put16(bits);
  for (char c : std::string("data")) b.push_back(c);
  put32(data);
  for (auto s : samples) put16(static_cast<std::uint16_t>(s));
  return b;
}

void dump(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

WavErrorKind read_error(const std::filesystem::path& p) {
  try {
    read_wav(p);
  } catch (const WavError& e) {
    return e.kind();
  }
  FAIL("read_wav did not throw");
  return WavErrorKind::unwritable;
}

std::vector<std::int16_t> stored_samples(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::vector<std::int16_t> out;
  for (std::size_t i = 44; i + 1 < b.size(); i += 2) out.push_back(static_cast<std::int16_t>(b[i] | (b[i + 1] << 8)));
  return out;
}

}  // namespace

TEST_CASE("read_wav scales 16-bit values by 1/32768") {
  test::TempDir dir;
  dump(dir / "a.wav", wav_bytes(1, 1, 16, {16384, -32768, 0}));
  const AudioClip c = read_wav(dir / "a.wav");
  REQUIRE(c.size() == 3);
  CHECK(c.samples[0] == 0.5);
  CHECK(c.samples[1] == -1.0);
  CHECK(c.samples[2] == 0.0);
  CHECK(c.sample_rate == 22050);
}

TEST_CASE("read_wav downmixes stereo by channel mean") {
  test::TempDir dir;
  // 0.4 and 0.8 in PCM16 counts
  dump(dir / "s.wav", wav_bytes(1, 2, 16, {13107, 26214}));
  const AudioClip c = read_wav(dir / "s.wav");
  REQUIRE(c.size() == 1);
  CHECK(c.samples[0] == doctest::Approx(0.6).epsilon(1.0 / 32768));
  CHECK(c.samples[0] == (13107.0 / 32768 + 26214.0 / 32768) / 2);
}

TEST_CASE("read_wav error kinds are distinct") {
  test::TempDir dir;
  CHECK(read_error(dir / "missing.wav") == WavErrorKind::missing_file);

  dump(dir / "rifx.wav", wav_bytes(1, 1, 16, {1, 2}, "RIFX"));
  CHECK(read_error(dir / "rifx.wav") == WavErrorKind::bad_container);

  dump(dir / "float.wav", wav_bytes(3, 1, 16, {1, 2}));
  CHECK(read_error(dir / "float.wav") == WavErrorKind::unsupported_format);

  dump(dir / "b24.wav", wav_bytes(1, 1, 24, {1, 2, 3}));
  CHECK(read_error(dir / "b24.wav") == WavErrorKind::unsupported_format);

  auto bytes = wav_bytes(1, 1, 16, {1, 2, 3});
  dump(dir / "short.wav", std::vector<unsigned char>(bytes.begin(), bytes.begin() + 10));
  CHECK(read_error(dir / "short.wav") == WavErrorKind::truncated);

  dump(dir / "cut.wav", std::vector<unsigned char>(bytes.begin(), bytes.end() - 3));
  CHECK(read_error(dir / "cut.wav") == WavErrorKind::truncated);

  dump(dir / "nofmt.wav", std::vector<unsigned char>(bytes.begin(), bytes.begin() + 30));
  CHECK(read_error(dir / "nofmt.wav") == WavErrorKind::truncated);
}

TEST_CASE("write_wav clamps and rounds with 32767") {
  test::TempDir dir;
  AudioClip c{{1.5, 0.0, -1.5, 0.5, -0.25}, 16000};
  write_wav(c, dir / "w.wav");
  const auto stored = stored_samples(dir / "w.wav");
  REQUIRE(stored.size() == 5);
  CHECK(stored[0] == 32767);
  CHECK(stored[1] == 0);
  CHECK(stored[2] == -32767);
  CHECK(stored[3] == 16384);  // round(16383.5)
  CHECK(stored[4] == -8192);  // round(-8191.75)
  CHECK(read_wav(dir / "w.wav").sample_rate == 16000);
}

TEST_CASE("write_wav rejects non-finite samples and unwritable paths") {
  test::TempDir dir;
  CHECK_THROWS_AS(write_wav(AudioClip{{std::nan("")}, 22050}, dir / "x.wav"), std::invalid_argument);
  try {
    write_wav(AudioClip{{0.1}, 22050}, dir / "no_such_dir" / "x.wav");
    FAIL("expected an error");
  } catch (const WavError& e) {
    CHECK(e.kind() == WavErrorKind::unwritable);
  }
}

TEST_CASE("WAV round trip stays within one quantization step") {
  // |x - round(32767 x) / 32768| <= (|x| + 0.5) / 32768, so <= 1/32768 for |x| <= 0.5.
  test::TempDir dir;
  const AudioClip c = test::sine(440.0, 1.0, 22050, 0.5);
  write_wav(c, dir / "sine.wav");
  const AudioClip back = read_wav(dir / "sine.wav");
  REQUIRE(back.size() == c.size());
  CHECK(test::max_abs_diff(c.samples, back.samples) <= 1.0 / 32768);
}

TEST_CASE("round trip property over random clips") {
  test::TempDir dir;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    AudioClip c = synth_test_signal(seed, 0.05 + 0.01 * seed, 22050);
    for (double& s : c.samples) s *= 0.5 / 0.8;
    write_wav(c, dir / "p.wav");
    CHECK(test::max_abs_diff(c.samples, read_wav(dir / "p.wav").samples) <= 1.0 / 32768);
  }
}

TEST_CASE("resample length rule and identity") {
  const AudioClip c = synth_test_signal(3, 1.0, 22050);
  CHECK(resample(c, 22050).samples == c.samples);
  CHECK(resample(c, 11025).size() == 11025);
  CHECK(resample(c, 16000).size() == 16000);
  CHECK(resample(c, 8000).sample_rate == 8000);
  CHECK(resample(AudioClip{{}, 22050}, 16000).empty());
  CHECK_THROWS_AS(resample(c, 0), std::invalid_argument);
}

TEST_CASE("resample round trip keeps a 1 kHz sine above 40 dB SNR") {
  const AudioClip c = test::sine(1000.0, 1.0, 22050);
  const AudioClip back = resample(resample(c, 16000), 22050);
  REQUIRE(back.size() == c.size());
  const double snr = metrics::snr(c, back);
  MESSAGE("1 kHz 22050->16000->22050 SNR = " << snr);
  CHECK(snr >= 40.0);
}

TEST_CASE("resample preserves band-limited sinusoids for several rates") {
  for (int rate : {16000, 11025, 8000}) {
    const double freq = 0.3 * rate / 2.0;
    const AudioClip c = test::sine(freq, 1.0, 22050);
    const double snr = metrics::snr(c, resample(resample(c, rate), 22050));
    CAPTURE(rate);
    CHECK(snr >= 40.0);
  }
}

TEST_CASE("synth_test_signal determinism, normalization, seed sensitivity") {
  const AudioClip a = synth_test_signal(7, 1.0, 22050);
  const AudioClip b = synth_test_signal(7, 1.0, 22050);
  const AudioClip c = synth_test_signal(8, 1.0, 22050);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.size() == 22050);
  for (std::uint64_t seed : {0ull, 1ull, 7ull, 123456789ull}) {
    const AudioClip s = synth_test_signal(seed, 0.3, 16000);
    double peak = 0.0;
    for (double v : s.samples) {
      REQUIRE(std::isfinite(v));
      peak = std::max(peak, std::abs(v));
    }
    CHECK(std::abs(peak - 0.8) <= 1e-9);
  }
  CHECK_THROWS_AS(synth_test_signal(1, 0.0, 22050), std::invalid_argument);
}
