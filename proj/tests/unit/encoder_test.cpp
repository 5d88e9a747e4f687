#include <cmath>
#include <numbers>
#include <set>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "test_util.hpp"
#include "textsynth/dataset_packer.hpp"
#include "textsynth/encoder.hpp"
#include "textsynth/philox.hpp"

namespace textsynth {
namespace {

// Independent restatement of the mock projection: FNV-1a 64 of the text keys
// a Philox4x32-10 stream; coordinate k is the Box-Muller normal for block k/2.
std::uint64_t oracle_fnv(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

std::vector<double> oracle_vector(const std::string& text, std::uint64_t seed, std::size_t d) {
  const std::uint64_t stream = oracle_fnv(text);
  std::vector<double> v(d);
  for (std::size_t k = 0; k < d; ++k) {
    const std::uint64_t block = k / 2;
    const auto r = Philox4x32::generate(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
        {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    const std::uint64_t w0 = (std::uint64_t{r[1]} << 32) | r[0];
    const std::uint64_t w1 = (std::uint64_t{r[3]} << 32) | r[2];
    const double u1 = (static_cast<double>(w0 >> 11) + 0.5) / 9007199254740992.0;
    const double u2 = (static_cast<double>(w1 >> 11) + 0.5) / 9007199254740992.0;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    v[k] = k % 2 == 0 ? radius * std::cos(2.0 * std::numbers::pi * u2) : radius * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v;
}

TEST(MockEncoder, MatchesHashProjectionOracle) {
  MockTextEncoder enc(8, 42);
  const auto batch = embed_texts(enc, {"x"}, {"abc"});
  const auto want = oracle_vector("abc", 42, 8);
  double norm = 0;
  for (double x : want) norm += static_cast<double>(static_cast<float>(x)) * static_cast<float>(x);
  norm = std::sqrt(norm);
  ASSERT_EQ(batch.dim(), 8u);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(enc.encode("abc")[k], static_cast<float>(want[k]));
    EXPECT_NEAR(batch.row(0)[k], static_cast<float>(want[k]) / norm, 1e-6);
  }
  EXPECT_TRUE(batch.normalized());
  EXPECT_EQ(enc.encoder_id(), "mock:d=8,seed=42");
}

TEST(MockEncoder, DeterministicAndCollisionFree) {
  MockTextEncoder enc(16, 3);
  EXPECT_EQ(enc.encode("same text"), enc.encode("same text"));
  std::set<std::vector<float>> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(enc.encode("caption " + std::to_string(i)));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(MockTextEncoder(16, 4).encode("same text"), enc.encode("same text"));
}

TEST(EmbedTexts, UnitNormsAndOrder) {
  MockTextEncoder enc(32, 1);
  std::vector<std::string> ids, texts;
  for (int i = 0; i < 600; ++i) {
    ids.push_back("id" + std::to_string(i));
    texts.push_back("text number " + std::to_string(i));
  }
  const auto batch = embed_texts(enc, ids, texts, true, 64);
  ASSERT_EQ(batch.size(), 600u);
  EXPECT_EQ(batch.ids(), ids);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double s = 0;
    for (float x : batch.row(i)) s += static_cast<double>(x) * x;
    ASSERT_NEAR(std::sqrt(s), 1.0, 1e-6);
  }
  const auto raw = embed_texts(enc, ids, texts, false);
  EXPECT_FALSE(raw.normalized());
  EXPECT_EQ(std::vector<float>(raw.row(5).begin(), raw.row(5).end()), enc.encode(texts[5]));
}

TEST(EmbedTexts, EmptyTextRejectedWithIndex) {
  MockTextEncoder enc(4, 1);
  try {
    embed_texts(enc, {"a", "b", "c"}, {"x", "y", ""});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("text 2"), std::string::npos);
  }
}

class DriftingEncoder : public TextEncoder {
 public:
  std::vector<std::vector<float>> embed(const std::vector<std::string>&, const std::vector<std::string>& texts) override {
    std::vector<std::vector<float>> out;
    for (const auto& t : texts) out.emplace_back(t == "odd" ? 5 : 4, 1.0f);
    return out;
  }
  std::string encoder_id() const override { return "drift"; }
};

TEST(EmbedTexts, DimensionDriftRejectedWithIndex) {
  DriftingEncoder enc;
  try {
    embed_texts(enc, {"0", "1", "2", "3"}, {"a", "b", "c", "odd"}, true, 2);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("index 3"), std::string::npos) << e.what();
  }
}

TEST(MockPairedEmbed, NoiselessDifferenceIsTheGap) {
  GapModelParams gap;
  gap.d = 16;
  gap.sigma = 0.0;
  std::vector<std::string> texts;
  for (int i = 0; i < 50; ++i) texts.push_back("t" + std::to_string(i));
  const auto pair = mock_paired_embed(texts, gap);
  const auto c = GapGeometry::build(gap).c;
  ASSERT_EQ(pair.text.size(), 50u);
  EXPECT_EQ(pair.image.modality(), Modality::RealImage);
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t j = 0; j < gap.d; ++j) {
      // Only the f32 storage rounding of the image vector separates them.
      const double diff = static_cast<double>(pair.text.row(i)[j]) - pair.image.row(i)[j];
      ASSERT_NEAR(diff, c[j], 1e-6);
    }
  }
}

TEST(MockPairedEmbed, NoisyMeanDifferenceApproachesGap) {
  GapModelParams gap;
  gap.d = 32;
  gap.sigma = 0.2;
  std::vector<std::string> texts;
  for (int i = 0; i < 1000; ++i) texts.push_back("sample " + std::to_string(i));
  const auto pair = mock_paired_embed(texts, gap);
  const auto c = GapGeometry::build(gap).c;
  const double bound = 4.0 * gap.sigma / std::sqrt(1000.0);
  for (std::size_t j = 0; j < gap.d; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 1000; ++i) s += static_cast<double>(pair.text.row(i)[j]) - pair.image.row(i)[j];
    EXPECT_NEAR(s / 1000.0, c[j], bound) << j;
  }
}

TEST(MockPairedEmbed, EmptyInput) {
  const auto pair = mock_paired_embed({}, GapModelParams{});
  EXPECT_TRUE(pair.text.empty());
  EXPECT_TRUE(pair.image.empty());
}

TEST(HttpEncoder, ParsesBothResponseShapes) {
  const auto a = HttpTextEncoder::parse_response(json::parse(R"({"data":[{"embedding":[1,2]},{"embedding":[3,4]}]})"));
  const auto b = HttpTextEncoder::parse_response(json::parse(R"({"embeddings":[[1,2],[3,4]]})"));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[1][0], 3.0f);
  EXPECT_THROW(HttpTextEncoder::parse_response(json::parse(R"({"vectors":[]})")), Error);
}

TEST(HttpEncoder, LocalServer) {
  httplib::Server server;
  server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    json data = json::array();
    for (const auto& text : body["input"]) {
      const float len = static_cast<float>(text.get<std::string>().size());
      data.push_back({{"embedding", {len, 1.0f, 0.0f}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpTextEncoder enc({"http://127.0.0.1:" + std::to_string(port) + "/v1", "m", "", std::chrono::milliseconds(5000)});
  const auto batch = embed_texts(enc, {"a", "b", "c"}, {"x", "yyy", "zz"}, false, 2);
  server.stop();
  t.join();
  ASSERT_EQ(batch.size(), 3u);
  EXPECT_EQ(batch.row(1)[0], 3.0f);
  EXPECT_EQ(enc.encoder_id(), "http:m");
}

TEST(HttpEncoder, UnreachableBackendNamesBatchIndex) {
  HttpTextEncoder enc({"http://127.0.0.1:1/v1", "m", "", std::chrono::milliseconds(500)});
  try {
    embed_texts(enc, {"a"}, {"x"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("index 0"), std::string::npos);
  }
}

TEST(PrecomputedEncoder, LooksUpVectorsById) {
  test::TempDir dir;
  EmbeddingBatch b(3, Modality::Text, false);
  const std::vector<float> v1 = {1, 2, 3}, v2 = {4, 5, 6};
  b.push_back("first", v1);
  b.push_back("second", v2);
  write_shard(dir / "reps-00000.unic", b);
  write_file_atomic(dir / "ids-00000.txt", "first\nsecond\n");
  PrecomputedEncoder enc(dir.path());
  const auto out = embed_texts(enc, {"second", "first"}, {"s", "f"}, false);
  EXPECT_EQ(std::vector<float>(out.row(0).begin(), out.row(0).end()), v2);
  EXPECT_THROW(embed_texts(enc, {"third"}, {"t"}), Error);
}

}  // namespace
}  // namespace textsynth
