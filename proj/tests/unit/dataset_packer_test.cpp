#include <cstring>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "textsynth/dataset_packer.hpp"
#include "textsynth/hash.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

std::vector<DiverseCaption> captions(std::size_t n) {
  std::vector<DiverseCaption> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text = "caption " + std::to_string(i) + " of a \"quoted\" caf\xc3\xa9 scene";
    const std::size_t tokens = corpus_token_count(text);
    out.push_back({"c-" + std::to_string(i), "s-" + std::to_string(i), std::move(text), tokens, "mock"});
  }
  return out;
}

EmbeddingBatch reps_for(const std::vector<std::string>& ids, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> bits;
  EmbeddingBatch b(d, Modality::SyntheticImage, false);
  std::vector<float> row(d);
  for (const auto& id : ids) {
    for (auto& x : row) {
      // Arbitrary finite bit patterns, including subnormals and negative zero.
      std::uint32_t u = bits(rng);
      if ((u & 0x7f800000u) == 0x7f800000u) u &= 0xbfffffffu;
      std::memcpy(&x, &u, 4);
    }
    b.push_back(id, row);
  }
  return b;
}

std::vector<std::string> ids_of(const std::vector<DiverseCaption>& c) {
  std::vector<std::string> ids;
  for (const auto& x : c) ids.push_back(x.id);
  return ids;
}

PackOptions options(std::size_t shard_rows = 100000) {
  PackOptions o;
  o.dataset_name = "test";
  o.encoder_id = "mock:d=8,seed=1";
  o.config_hash = "abc";
  o.created_at = "2025-01-01T00:00:00Z";
  o.shard_rows = shard_rows;
  return o;
}

std::string read_bytes(const fs::path& p) { return read_file(p); }

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

TEST(Shard, HeaderLayoutIsBitExact) {
  ShardHeader h;
  h.dim = 2;
  h.count = 1;
  h.modality = Modality::RealImage;
  h.normalized = true;
  const std::vector<float> data = {1.0f, -2.0f};
  const std::string bytes = encode_shard(h, data);
  ASSERT_EQ(bytes.size(), kShardHeaderBytes + 8 + kShardFooterBytes);
  const std::string expected_header("UNIC\x01\x00\x02\x00\x00\x00\x01\x00\x00\x00\x00\x00\x00\x00\x02\x01", 20);
  EXPECT_EQ(bytes.substr(0, 20), expected_header);
  EXPECT_EQ(bytes.substr(20, 8), std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8));
  std::uint64_t crc = 0;
  for (int i = 7; i >= 0; --i) crc = (crc << 8) | static_cast<unsigned char>(bytes[28 + static_cast<std::size_t>(i)]);
  EXPECT_EQ(crc, Crc64::of(bytes.substr(20, 8)));
}

TEST(Shard, RoundTripIsBitExact) {
  test::TempDir dir;
  const auto b = reps_for({"a", "b", "c"}, 5, 1);
  write_shard(dir / "x.unic", b);
  const Shard s = read_shard(dir / "x.unic");
  EXPECT_EQ(s.header.count, 3u);
  EXPECT_EQ(s.header.dim, 5u);
  EXPECT_EQ(s.header.modality, Modality::SyntheticImage);
  ASSERT_EQ(s.data.size(), b.data().size());
  EXPECT_EQ(std::memcmp(s.data.data(), b.data().data(), b.data().size() * 4), 0);
}

TEST(Shard, FlippedPayloadByteFailsChecksum) {
  test::TempDir dir;
  write_shard(dir / "x.unic", reps_for({"a", "b"}, 4, 2));
  std::string bytes = read_bytes(dir / "x.unic");
  bytes[kShardHeaderBytes + 5] = static_cast<char>(bytes[kShardHeaderBytes + 5] ^ 0x10);
  write_bytes(dir / "x.unic", bytes);
  try {
    read_shard(dir / "x.unic");
    FAIL();
  } catch (const ShardFormatError& e) {
    EXPECT_EQ(e.kind(), ShardFormatError::Kind::Checksum);
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(Shard, TruncatedFileReportsLengthMismatch) {
  test::TempDir dir;
  write_shard(dir / "x.unic", reps_for({"a", "b"}, 4, 3));
  std::string bytes = read_bytes(dir / "x.unic");
  write_bytes(dir / "x.unic", bytes.substr(0, bytes.size() - 3));
  try {
    read_shard(dir / "x.unic");
    FAIL();
  } catch (const ShardFormatError& e) {
    EXPECT_EQ(e.kind(), ShardFormatError::Kind::LengthMismatch);
    EXPECT_NE(std::string(e.what()).find("payload length mismatch"), std::string::npos);
  }
}

TEST(Shard, BadMagicVersionAndModality) {
  const std::string good = encode_shard(ShardHeader{kShardVersion, 1, 1, Modality::Text, false}, std::vector<float>{1.0f});
  auto kind_of = [](const std::string& bytes) {
    try {
      decode_shard(bytes);
    } catch (const ShardFormatError& e) {
      return e.kind();
    }
    ADD_FAILURE();
    return ShardFormatError::Kind::Io;
  };
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), ShardFormatError::Kind::BadMagic);
  std::string version = good;
  version[4] = 2;
  EXPECT_EQ(kind_of(version), ShardFormatError::Kind::BadVersion);
  std::string modality = good;
  modality[18] = 9;
  EXPECT_EQ(kind_of(modality), ShardFormatError::Kind::BadModality);
  EXPECT_EQ(kind_of(good.substr(0, 10)), ShardFormatError::Kind::LengthMismatch);
}

TEST(Shard, MeanRoundTrip) {
  test::TempDir dir;
  MeanVector mu{{0.5, -1.25, 3.0}, 42, Modality::Text};
  write_mean(dir / "m.unic", mu);
  const auto back = read_mean(dir / "m.unic");
  EXPECT_EQ(back.values, mu.values);
  EXPECT_EQ(back.sample_count, 42u);
  EXPECT_TRUE(fs::exists(dir / "m.json"));
}

TEST(Pretrain, TwoHundredPairsRoundTrip) {
  test::TempDir dir;
  const auto caps = captions(200);
  const auto reps = reps_for(ids_of(caps), 8, 4);
  const json manifest = write_pretrain_dataset(caps, reps, dir.path(), options(64));
  EXPECT_EQ(manifest["counts"]["pretrain"], 200);
  EXPECT_EQ(manifest["dim"], 8);
  EXPECT_TRUE(verify_dataset(dir.path()).ok());

  std::vector<float> floats;
  std::vector<std::string> ids, texts;
  for (std::size_t s = 0; s < 4; ++s) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "%05zu", s);
    const Shard shard = read_shard(dir / ("reps-" + std::string(suffix) + ".unic"));
    floats.insert(floats.end(), shard.data.begin(), shard.data.end());
    for (auto& id : read_lines(dir / ("ids-" + std::string(suffix) + ".txt"))) ids.push_back(id);
    for (auto& t : read_lines(dir / ("captions-" + std::string(suffix) + ".jsonl"))) texts.push_back(t);
  }
  EXPECT_FALSE(fs::exists(dir / "reps-00004.unic"));
  EXPECT_EQ(ids, ids_of(caps));
  ASSERT_EQ(floats.size(), reps.data().size());
  EXPECT_EQ(std::memcmp(floats.data(), reps.data().data(), floats.size() * 4), 0);
  for (std::size_t i = 0; i < caps.size(); ++i) {
    EXPECT_EQ(texts[i], canonical_json(caps[i].to_json()));
    EXPECT_EQ(DiverseCaption::from_json(json::parse(texts[i])), caps[i]);
  }
}

TEST(Pretrain, VectorsPairedByIdNotPosition) {
  test::TempDir dir;
  const auto caps = captions(3);
  EmbeddingBatch reps(2, Modality::SyntheticImage, false);
  const std::vector<float> v0 = {0, 0}, v1 = {1, 1}, v2 = {2, 2};
  reps.push_back("c-2", v2);
  reps.push_back("c-0", v0);
  reps.push_back("c-1", v1);
  write_pretrain_dataset(caps, reps, dir.path(), options());
  const Shard s = read_shard(dir / "reps-00000.unic");
  EXPECT_EQ(s.data, (std::vector<float>{0, 0, 1, 1, 2, 2}));
}

TEST(Pretrain, EmptyDatasetIsValid) {
  test::TempDir dir;
  const json manifest = write_pretrain_dataset({}, EmbeddingBatch(8, Modality::SyntheticImage, false), dir.path(), options());
  EXPECT_EQ(manifest["counts"]["pretrain"], 0);
  const auto report = verify_dataset(dir.path());
  EXPECT_TRUE(report.ok()) << report.to_json().dump(2);
}

TEST(Pretrain, UnpairedIdLeavesNoManifest) {
  test::TempDir dir;
  const auto caps = captions(5);
  auto ids = ids_of(caps);
  ids.pop_back();
  try {
    write_pretrain_dataset(caps, reps_for(ids, 4, 5), dir.path(), options());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("unpaired id"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("c-4"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

InstructionSample sample(std::size_t i) {
  InstructionSample s;
  s.id = "i-c-" + std::to_string(i);
  s.caption_id = "c-" + std::to_string(i);
  s.task = TaskKind::MultipleChoice;
  DialogueTurn t;
  t.question = "Which color?";
  t.answer = "B";
  t.options = {{'A', "red", false}, {'B', "blue", true}, {'C', "green", false}, {'D', "gray", false}};
  s.turns = {t};
  return s;
}

TEST(Instruct, RoundTripAndVerify) {
  test::TempDir dir;
  std::vector<InstructionSample> samples;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 30; ++i) {
    samples.push_back(sample(i));
    ids.push_back(samples.back().id);
  }
  const auto reps = reps_for(ids, 6, 6);
  const json manifest = write_instruct_dataset(samples, reps, dir.path(), options(16));
  EXPECT_EQ(manifest["counts"]["instruct"], 30);
  EXPECT_TRUE(verify_dataset(dir.path()).ok());
  const auto lines = read_lines(dir / "instruct-00001.jsonl");
  ASSERT_EQ(lines.size(), 14u);
  EXPECT_EQ(InstructionSample::from_json(json::parse(lines[0])), samples[16]);
  const Shard s = read_shard(dir / "instruct-reps-00000.unic");
  EXPECT_EQ(std::memcmp(s.data.data(), reps.data().data(), 16 * 6 * 4), 0);
}

TEST(Instruct, EmptyAndUnpaired) {
  test::TempDir a, b;
  EXPECT_EQ(write_instruct_dataset({}, EmbeddingBatch(4, Modality::SyntheticImage, false), a.path(), options())["counts"]["instruct"], 0);
  EXPECT_THROW(write_instruct_dataset({sample(0)}, reps_for({"other"}, 4, 7), b.path(), options()), ValidationError);
}

TEST(Verify, DetectsCorruptionAndMissingFiles) {
  test::TempDir dir;
  const auto caps = captions(20);
  write_pretrain_dataset(caps, reps_for(ids_of(caps), 4, 8), dir.path(), options());
  ASSERT_TRUE(verify_dataset(dir.path()).ok());

  std::string bytes = read_bytes(dir / "reps-00000.unic");
  bytes[kShardHeaderBytes] = static_cast<char>(bytes[kShardHeaderBytes] ^ 1);
  write_bytes(dir / "reps-00000.unic", bytes);
  auto report = verify_dataset(dir.path());
  EXPECT_FALSE(report.ok());

  fs::remove(dir / "ids-00000.txt");
  report = verify_dataset(dir.path());
  std::size_t failed = 0;
  for (const auto& f : report.files) failed += !f.ok;
  EXPECT_GE(failed, 2u);
}

TEST(Verify, CaptionLineCountMismatchDetected) {
  test::TempDir dir;
  const auto caps = captions(4);
  write_pretrain_dataset(caps, reps_for(ids_of(caps), 4, 9), dir.path(), options());
  std::string text = read_bytes(dir / "captions-00000.jsonl");
  text += canonical_json(caps[0].to_json()) + "\n";
  write_bytes(dir / "captions-00000.jsonl", text);
  EXPECT_FALSE(verify_dataset(dir.path()).ok());
}

TEST(Writer, WritesAreDeterministic) {
  test::TempDir a, b;
  const auto caps = captions(50);
  const auto reps = reps_for(ids_of(caps), 8, 10);
  write_pretrain_dataset(caps, reps, a.path(), options(7));
  write_pretrain_dataset(caps, reps, b.path(), options(7));
  for (const auto& entry : fs::directory_iterator(a.path())) {
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b / entry.path().filename().string())) << entry.path();
  }
}

}  // namespace
}  // namespace textsynth
