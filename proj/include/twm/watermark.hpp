#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace twm {

/// n-bit payload. `soft` holds decoder outputs when the bits came from
/// extraction; hard bits are soft >= 0.5.
struct WatermarkBits {
  std::vector<std::uint8_t> bits;
  std::vector<double> soft;

  std::size_t size() const noexcept { return bits.size(); }

  static WatermarkBits from_soft(std::vector<double> soft);
  /// Parses a string of '0'/'1' characters.
  static WatermarkBits parse(std::string_view bitstring);
  /// n bits derived from UTF-8 text: FNV-1a 64-bit hash, expanded with
  /// splitmix64 over consecutive 64-bit blocks, least significant bit first.
  static WatermarkBits from_text(std::string_view text, std::size_t n);

  std::string str() const;
  WatermarkBits inverted() const;
  bool operator==(const WatermarkBits& o) const { return bits == o.bits; }
};

}  // namespace twm
