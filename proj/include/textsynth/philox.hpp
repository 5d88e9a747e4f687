#pragma once

// Counter-based random numbers (Philox4x32-10, Salmon et al. 2011).
//
// Every draw is a pure function of (seed, stream, index), so rows of a matrix
// can be filled in any order or in parallel and still produce identical bits.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace textsynth {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Builds a 64-bit stream id from a purpose tag and an index (< 2^48).
constexpr std::uint64_t stream_id(std::uint16_t tag, std::uint64_t index) {
  return (std::uint64_t{tag} << 48) | (index & 0xFFFF'FFFF'FFFFull);
}

/// One independent, random-access stream of uniforms and standard normals.
///
/// Index i of the stream maps to Philox block i/2; each block yields two
/// 64-bit words, each word one uniform in the open interval (0, 1). Normals
/// use Box-Muller on the block's pair of uniforms (even index -> cosine
/// branch, odd index -> sine branch).
class CounterStream {
 public:
  constexpr CounterStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  std::uint64_t bits(std::uint64_t index) const {
    const auto block = raw_block(index / 2);
    const std::size_t w = (index % 2) * 2;
    return (std::uint64_t{block[w + 1]} << 32) | block[w];
  }

  /// Uniform in (0, 1) with 53 bits of resolution.
  double uniform(std::uint64_t index) const { return to_unit(bits(index)); }

  double gaussian(std::uint64_t index) const {
    const auto block = raw_block(index / 2);
    const double u1 = to_unit((std::uint64_t{block[1]} << 32) | block[0]);
    const double u2 = to_unit((std::uint64_t{block[3]} << 32) | block[2]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (index % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
  }

  /// Uniform integer in [0, bound) by 128-bit multiply-shift (bound > 0).
  std::uint64_t below(std::uint64_t index, std::uint64_t bound) const {
    const unsigned __int128 wide = static_cast<unsigned __int128>(bits(index)) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  Philox4x32::Counter raw_block(std::uint64_t block) const {
    return Philox4x32::generate(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  }

  static double to_unit(std::uint64_t word) {
    return (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
};

}  // namespace textsynth
