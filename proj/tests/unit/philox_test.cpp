#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "textsynth/philox.hpp"

namespace textsynth {
namespace {

using Counter = Philox4x32::Counter;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswerZero) {
  const Counter out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out, (Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
  const Counter out = Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                           {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out, (Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
  const Counter out = Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                           {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out, (Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, GenerateIsConstexpr) {
  constexpr Counter out = Philox4x32::generate({0, 0, 0, 0}, {0, 0});
  static_assert(out[0] == 0x6627e8d5u);
}

TEST(CounterStream, StreamIdPacksTagAndIndex) {
  EXPECT_EQ(stream_id(0x6A01, 5), 0x6A01'0000'0000'0005ull);
  EXPECT_EQ(stream_id(1, 0x1'0000'0000'0000ull), 0x0001'0000'0000'0000ull);
}

TEST(CounterStream, BitsMatchRawBlocks) {
  const CounterStream s(0x1234'5678'9abc'def0ull, 0x0fed'cba9'8765'4321ull);
  const Counter b1 = Philox4x32::generate({1, 0, 0x87654321u, 0x0fedcba9u}, {0x9abcdef0u, 0x12345678u});
  EXPECT_EQ(s.bits(2), (std::uint64_t{b1[1]} << 32) | b1[0]);
  EXPECT_EQ(s.bits(3), (std::uint64_t{b1[3]} << 32) | b1[2]);
}

TEST(CounterStream, RandomAccessIsOrderIndependent) {
  const CounterStream a(7, stream_id(0x6A02, 3));
  std::vector<double> forward;
  for (std::uint64_t i = 0; i < 64; ++i) forward.push_back(a.gaussian(i));
  for (std::uint64_t i = 64; i-- > 0;) EXPECT_EQ(a.gaussian(i), forward[i]);
}

TEST(CounterStream, UniformStaysInOpenInterval) {
  const CounterStream s(42, 0);
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const double u = s.uniform(i);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(CounterStream, GaussianMoments) {
  const CounterStream s(11, stream_id(0x6A01, 0));
  constexpr int kN = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < kN; ++i) {
    const double g = s.gaussian(static_cast<std::uint64_t>(i));
    sum += g;
    sq += g * g;
  }
  const double mean = sum / kN;
  const double var = sq / kN - mean * mean;
  // 5 standard errors.
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(kN));
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / kN));
}

TEST(CounterStream, BelowIsInRangeAndCoversAllValues) {
  const CounterStream s(3, 9);
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    const auto v = s.below(i, 7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(CounterStream, DistinctStreamsDiffer) {
  const CounterStream a(1, stream_id(0x6A02, 0));
  const CounterStream b(1, stream_id(0x6A02, 1));
  const CounterStream c(2, stream_id(0x6A02, 0));
  EXPECT_NE(a.bits(0), b.bits(0));
  EXPECT_NE(a.bits(0), c.bits(0));
}

}  // namespace
}  // namespace textsynth
