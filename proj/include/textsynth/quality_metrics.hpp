#pragma once

// Lexical diversity and length statistics over a text corpus. Every metric
// uses metric_tokens() from text.hpp.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "textsynth/io.hpp"
#include "textsynth/kernels.hpp"

namespace textsynth {

enum class TtrMode { PerSampleMean, CorpusLevel };
enum class EntropyUnit { Nats, Bits };

std::string_view to_string(TtrMode mode);
std::string_view to_string(EntropyUnit unit);
std::optional<TtrMode> parse_ttr_mode(std::string_view name);
std::optional<EntropyUnit> parse_entropy_unit(std::string_view name);

inline constexpr std::size_t kLengthBucketWidth = 25;

/// Mergeable single-pass state. Merging in a fixed order gives the same
/// result as one accumulator over the concatenated corpus.
class CorpusAccumulator {
 public:
  void add(std::string_view text);
  void merge(const CorpusAccumulator& other);

  std::size_t samples() const { return lengths_.size(); }
  const std::map<std::string, std::size_t, std::less<>>& counts() const { return counts_; }
  const std::vector<std::size_t>& lengths() const { return lengths_; }

  double ttr(TtrMode mode) const;
  double entropy(EntropyUnit unit) const;

 private:
  std::map<std::string, std::size_t, std::less<>> counts_;
  std::vector<std::size_t> lengths_;
  kernels::CompensatedSum sample_ttr_{1};
  std::size_t ttr_samples_ = 0;
  std::size_t total_tokens_ = 0;
};

/// PerSampleMean averages unique/total over samples that have tokens;
/// CorpusLevel is global unique/total. Throws on an empty corpus.
double ttr(const std::vector<std::string>& corpus, TtrMode mode = TtrMode::PerSampleMean);

/// Shannon entropy of the unigram distribution. Throws on an empty corpus.
double token_entropy(const std::vector<std::string>& corpus, EntropyUnit unit = EntropyUnit::Nats);

struct LengthStats {
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> histogram;  // (bucket_start, count), width 25 from 0
};

LengthStats length_stats(const std::vector<std::string>& corpus);
LengthStats length_stats(const std::vector<std::size_t>& lengths);

struct CorpusStats {
  std::size_t sample_count = 0;
  double ttr = 0.0;
  TtrMode ttr_mode = TtrMode::PerSampleMean;
  double entropy = 0.0;
  EntropyUnit entropy_unit = EntropyUnit::Nats;
  LengthStats length;

  json to_json() const;
  static CorpusStats from_json(const json& j);
  std::string to_table() const;
  std::string histogram_csv() const;
};

CorpusStats analyze_corpus(const std::vector<std::string>& corpus, TtrMode mode = TtrMode::PerSampleMean,
                           EntropyUnit unit = EntropyUnit::Nats);
CorpusStats corpus_stats(const CorpusAccumulator& acc, TtrMode mode, EntropyUnit unit);

struct DeltaRow {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;
};

/// Rows for sample_count, ttr, entropy and length min/mean/max. Throws when
/// the two reports use different TTR modes or entropy units.
std::vector<DeltaRow> compare_reports(const CorpusStats& a, const CorpusStats& b);

/// Aligned plain-text table; deltas carry an explicit sign.
std::string format_delta_table(const std::vector<DeltaRow>& rows, std::string_view a_name = "a",
                               std::string_view b_name = "b", int precision = 2);

}  // namespace textsynth
