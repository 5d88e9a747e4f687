#include <string>

#include <gtest/gtest.h>

#include "textsynth/hash.hpp"
#include "textsynth/io.hpp"

namespace textsynth {
namespace {

TEST(Crc64, CheckValue) { EXPECT_EQ(Crc64::of("123456789"), 0x995DC9BBDF1939FAull); }

TEST(Crc64, EmptyInputIsZero) { EXPECT_EQ(Crc64::of(""), 0u); }

TEST(Crc64, IncrementalMatchesOneShot) {
  const std::string text = "the quick brown fox jumps over the lazy dog";
  for (std::size_t cut = 0; cut <= text.size(); ++cut) {
    Crc64 c;
    c.update(std::string_view(text).substr(0, cut));
    c.update(std::string_view(text).substr(cut));
    ASSERT_EQ(c.value(), Crc64::of(text)) << cut;
  }
}

TEST(Crc64, DetectsSingleBitFlip) {
  std::string text(1000, 'x');
  const auto base = Crc64::of(text);
  for (std::size_t i = 0; i < text.size(); i += 37) {
    std::string flipped = text;
    flipped[i] = static_cast<char>(flipped[i] ^ 0x01);
    ASSERT_NE(Crc64::of(flipped), base);
  }
}

TEST(Fnv1a64, ReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Hex64, ZeroPadded) {
  EXPECT_EQ(hex64(0), "0000000000000000");
  EXPECT_EQ(hex64(0x995DC9BBDF1939FAull), "995dc9bbdf1939fa");
}

}  // namespace
}  // namespace textsynth
