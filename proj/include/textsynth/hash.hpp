#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace textsynth {

/// CRC-64/XZ: reflected ECMA-182 polynomial, init and final xor all ones.
/// Check value for "123456789" is 0x995DC9BBDF1939FA.
class Crc64 {
 public:
  void update(std::span<const std::byte> data);
  void update(std::string_view data);
  std::uint64_t value() const { return ~state_; }

  static std::uint64_t of(std::string_view data) {
    Crc64 c;
    c.update(data);
    return c.value();
  }

 private:
  std::uint64_t state_ = ~std::uint64_t{0};
};

/// 64-bit FNV-1a; used to key the mock backends on prompt text.
constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace textsynth
