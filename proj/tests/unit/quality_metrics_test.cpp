#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "textsynth/error.hpp"
#include "textsynth/quality_metrics.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

std::vector<std::string> fixture_corpus() {
  std::vector<std::string> lines;
  std::ifstream in(test::data_dir() / "captions_1000.txt");
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

TEST(Ttr, CatSatOnTheMat) {
  const std::vector<std::string> c = {"the cat sat on the mat"};
  EXPECT_EQ(ttr(c, TtrMode::PerSampleMean), 5.0 / 6.0);
  EXPECT_EQ(ttr(c, TtrMode::CorpusLevel), 5.0 / 6.0);
}

TEST(Ttr, ModeSeparationWitnesses) {
  EXPECT_EQ(ttr({"a a", "b b"}, TtrMode::PerSampleMean), 0.5);
  EXPECT_EQ(ttr({"a a", "b b"}, TtrMode::CorpusLevel), 0.5);
  EXPECT_EQ(ttr({"a b", "a b"}, TtrMode::PerSampleMean), 1.0);
  EXPECT_EQ(ttr({"a b", "a b"}, TtrMode::CorpusLevel), 0.5);
}

TEST(Ttr, EmptyCorpusRejected) {
  EXPECT_THROW(ttr({}), ValidationError);
  EXPECT_THROW(token_entropy({}), ValidationError);
  EXPECT_THROW(length_stats(std::vector<std::string>{}), ValidationError);
}

TEST(Ttr, CorpusLevelNonIncreasingUnderDuplicates) {
  std::vector<std::string> c = {"a red bus", "a blue car on a road"};
  double last = ttr(c, TtrMode::CorpusLevel);
  for (int i = 0; i < 10; ++i) {
    c.push_back(c[static_cast<std::size_t>(i) % 2]);
    const double now = ttr(c, TtrMode::CorpusLevel);
    EXPECT_LE(now, last);
    last = now;
  }
}

TEST(Entropy, UniformFourTokens) {
  const std::vector<std::string> c = {"w x y z", "z y x w"};
  EXPECT_EQ(token_entropy(c, EntropyUnit::Nats), std::log(4.0));
  EXPECT_EQ(token_entropy(c, EntropyUnit::Bits), 2.0);
}

TEST(Entropy, SingleRepeatedTokenIsZero) {
  EXPECT_EQ(token_entropy({"same same same"}), 0.0);
  EXPECT_FALSE(std::signbit(token_entropy({"same same same"})));
}

TEST(Entropy, MaximizedByUniformDistribution) {
  std::mt19937 rng(1);
  for (int v = 2; v <= 6; ++v) {
    std::string text;
    for (int i = 0; i < 40; ++i) text += "t" + std::to_string(rng() % static_cast<unsigned>(v)) + " ";
    EXPECT_LE(token_entropy({text}, EntropyUnit::Nats), std::log(static_cast<double>(v)) + 1e-12);
  }
}

TEST(Length, HandExamples) {
  const auto one = length_stats(std::vector<std::string>{"a b c"});
  EXPECT_EQ(one.min, 3u);
  EXPECT_EQ(one.max, 3u);
  EXPECT_EQ(one.mean, 3.0);
  const auto two = length_stats(std::vector<std::size_t>{10, 20});
  EXPECT_EQ(two.mean, 15.0);
  ASSERT_EQ(two.histogram.size(), 1u);
  EXPECT_EQ(two.histogram[0], (std::pair<std::size_t, std::size_t>{0, 2}));
}

TEST(Length, HistogramIncludesEmptyBucketsAndSumsToCount) {
  const auto s = length_stats(std::vector<std::size_t>{3, 80});
  ASSERT_EQ(s.histogram.size(), 4u);
  EXPECT_EQ(s.histogram[1].second, 0u);
  EXPECT_EQ(s.histogram[3], (std::pair<std::size_t, std::size_t>{75, 1}));
}

TEST(Fixture, MatchesCommittedOracleExactly) {
  const json ref = json::parse(read_file(test::data_dir() / "captions_1000.reference.json"));
  const auto corpus = fixture_corpus();
  ASSERT_EQ(corpus.size(), ref["sample_count"].get<std::size_t>());
  EXPECT_EQ(ttr(corpus, TtrMode::PerSampleMean), ref["ttr_per_sample_mean"].get<double>());
  EXPECT_EQ(ttr(corpus, TtrMode::CorpusLevel), ref["ttr_corpus_level"].get<double>());
  EXPECT_EQ(token_entropy(corpus, EntropyUnit::Nats), ref["entropy_nats"].get<double>());
  EXPECT_EQ(token_entropy(corpus, EntropyUnit::Bits), ref["entropy_bits"].get<double>());
  const auto len = length_stats(corpus);
  EXPECT_EQ(len.min, ref["length_min"].get<std::size_t>());
  EXPECT_EQ(len.max, ref["length_max"].get<std::size_t>());
  EXPECT_EQ(len.mean, ref["length_mean"].get<double>());
  std::vector<std::pair<std::size_t, std::size_t>> hist;
  for (const auto& b : ref["length_histogram"]) hist.emplace_back(b[0], b[1]);
  EXPECT_EQ(len.histogram, hist);
}

TEST(Fixture, StableAcrossRunsAndShardedMerges) {
  const auto corpus = fixture_corpus();
  const auto whole = analyze_corpus(corpus);
  EXPECT_EQ(canonical_json(whole.to_json()), canonical_json(analyze_corpus(corpus).to_json()));

  std::array<CorpusAccumulator, 4> parts;
  for (std::size_t i = 0; i < corpus.size(); ++i) parts[i * 4 / corpus.size()].add(corpus[i]);
  CorpusAccumulator merged;
  for (const auto& p : parts) merged.merge(p);
  const auto m = corpus_stats(merged, TtrMode::PerSampleMean, EntropyUnit::Nats);
  EXPECT_EQ(m.entropy, whole.entropy);
  EXPECT_NEAR(m.ttr, whole.ttr, 1e-15);
  EXPECT_EQ(m.length.histogram, whole.length.histogram);
}

TEST(Metrics, OrderInvariant) {
  auto corpus = fixture_corpus();
  corpus.resize(200);
  const auto a = analyze_corpus(corpus);
  std::mt19937 rng(9);
  std::shuffle(corpus.begin(), corpus.end(), rng);
  const auto b = analyze_corpus(corpus);
  EXPECT_EQ(a.entropy, b.entropy);
  EXPECT_NEAR(a.ttr, b.ttr, 1e-15);
  EXPECT_EQ(a.length.histogram, b.length.histogram);
  EXPECT_EQ(a.length.mean, b.length.mean);
}

TEST(CorpusStats, JsonRoundTripAndInvariants) {
  const auto s = analyze_corpus(fixture_corpus(), TtrMode::CorpusLevel, EntropyUnit::Bits);
  const auto back = CorpusStats::from_json(s.to_json());
  EXPECT_EQ(canonical_json(back.to_json()), canonical_json(s.to_json()));
  EXPECT_LE(static_cast<double>(s.length.min), s.length.mean);
  EXPECT_LE(s.length.mean, static_cast<double>(s.length.max));
  std::size_t total = 0;
  for (const auto& [start, count] : s.length.histogram) total += count;
  EXPECT_EQ(total, s.sample_count);
  EXPECT_EQ(s.to_json()["entropy_unit"], "bits");
  EXPECT_NE(s.histogram_csv().find("bucket_start"), std::string::npos);
}

CorpusStats stats_with(double ttr_value, double entropy) {
  CorpusStats s;
  s.sample_count = 1;
  s.ttr = ttr_value;
  s.entropy = entropy;
  s.length = length_stats(std::vector<std::size_t>{1});
  return s;
}

TEST(Compare, TableTwoDeltasAsFormattingFixture) {
  const auto rows = compare_reports(stats_with(0.68, 6.07), stats_with(0.61, 5.91));
  const std::string table = format_delta_table(rows, "ours", "baseline");
  EXPECT_NE(table.find("+0.07"), std::string::npos) << table;
  EXPECT_NE(table.find("+0.16"), std::string::npos) << table;
}

TEST(Compare, EqualReportsGiveZeroDeltas) {
  const auto s = stats_with(0.5, 4.0);
  const auto rows = compare_reports(s, s);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_EQ(r.delta, 0.0);
  const auto table = format_delta_table(rows);
  EXPECT_EQ(table.find("-0.00"), std::string::npos);
}

TEST(Compare, UnitMismatchRejected) {
  auto a = stats_with(0.5, 4.0);
  auto b = a;
  b.entropy_unit = EntropyUnit::Bits;
  EXPECT_THROW(compare_reports(a, b), Error);
  b = a;
  b.ttr_mode = TtrMode::CorpusLevel;
  EXPECT_THROW(compare_reports(a, b), Error);
}

}  // namespace
}  // namespace textsynth
