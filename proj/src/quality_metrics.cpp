#include "textsynth/quality_metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "textsynth/error.hpp"
#include "textsynth/text.hpp"

namespace textsynth {

std::string_view to_string(TtrMode mode) {
  return mode == TtrMode::PerSampleMean ? "per_sample_mean" : "corpus_level";
}

std::string_view to_string(EntropyUnit unit) { return unit == EntropyUnit::Nats ? "nats" : "bits"; }

std::optional<TtrMode> parse_ttr_mode(std::string_view name) {
  if (name == "per_sample_mean") return TtrMode::PerSampleMean;
  if (name == "corpus_level") return TtrMode::CorpusLevel;
  return std::nullopt;
}

std::optional<EntropyUnit> parse_entropy_unit(std::string_view name) {
  if (name == "nats") return EntropyUnit::Nats;
  if (name == "bits") return EntropyUnit::Bits;
  return std::nullopt;
}

void CorpusAccumulator::add(std::string_view text) {
  const auto tokens = metric_tokens(text);
  lengths_.push_back(tokens.size());
  total_tokens_ += tokens.size();
  if (!tokens.empty()) {
    std::set<std::string_view> unique(tokens.begin(), tokens.end());
    const double r = static_cast<double>(unique.size()) / static_cast<double>(tokens.size());
    sample_ttr_.add_row(std::span<const double>(&r, 1));
    ++ttr_samples_;
  }
  for (const auto& t : tokens) {
    const auto it = counts_.find(t);
    if (it == counts_.end()) {
      counts_.emplace(t, 1);
    } else {
      ++it->second;
    }
  }
}

void CorpusAccumulator::merge(const CorpusAccumulator& other) {
  for (const auto& [t, c] : other.counts_) counts_[t] += c;
  lengths_.insert(lengths_.end(), other.lengths_.begin(), other.lengths_.end());
  sample_ttr_.merge(other.sample_ttr_);
  ttr_samples_ += other.ttr_samples_;
  total_tokens_ += other.total_tokens_;
}

double CorpusAccumulator::ttr(TtrMode mode) const {
  if (lengths_.empty()) throw ValidationError("ttr: empty corpus");
  if (total_tokens_ == 0) throw ValidationError("ttr: corpus has no tokens");
  if (mode == TtrMode::CorpusLevel) {
    return static_cast<double>(counts_.size()) / static_cast<double>(total_tokens_);
  }
  return (sample_ttr_.sum[0] + sample_ttr_.comp[0]) / static_cast<double>(ttr_samples_);
}

double CorpusAccumulator::entropy(EntropyUnit unit) const {
  if (lengths_.empty()) throw ValidationError("entropy: empty corpus");
  if (total_tokens_ == 0) throw ValidationError("entropy: corpus has no tokens");
  const double n = static_cast<double>(total_tokens_);
  kernels::CompensatedSum acc(1);
  for (const auto& [token, count] : counts_) {
    const double p = static_cast<double>(count) / n;
    const double term = -p * (unit == EntropyUnit::Nats ? std::log(p) : std::log2(p));
    acc.add_row(std::span<const double>(&term, 1));
  }
  const double h = acc.sum[0] + acc.comp[0];
  return h == 0.0 ? 0.0 : h;  // no negative zero
}

double ttr(const std::vector<std::string>& corpus, TtrMode mode) {
  CorpusAccumulator acc;
  for (const auto& t : corpus) acc.add(t);
  return acc.ttr(mode);
}

double token_entropy(const std::vector<std::string>& corpus, EntropyUnit unit) {
  CorpusAccumulator acc;
  for (const auto& t : corpus) acc.add(t);
  return acc.entropy(unit);
}

LengthStats length_stats(const std::vector<std::size_t>& lengths) {
  if (lengths.empty()) throw ValidationError("length_stats: empty corpus");
  LengthStats s;
  s.min = *std::min_element(lengths.begin(), lengths.end());
  s.max = *std::max_element(lengths.begin(), lengths.end());
  std::size_t total = 0;
  for (auto l : lengths) total += l;
  s.mean = static_cast<double>(total) / static_cast<double>(lengths.size());
  const std::size_t buckets = s.max / kLengthBucketWidth + 1;
  std::vector<std::size_t> counts(buckets, 0);
  for (auto l : lengths) ++counts[l / kLengthBucketWidth];
  for (std::size_t b = 0; b < buckets; ++b) s.histogram.emplace_back(b * kLengthBucketWidth, counts[b]);
  return s;
}

LengthStats length_stats(const std::vector<std::string>& corpus) {
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& t : corpus) lengths.push_back(metric_tokens(t).size());
  return length_stats(lengths);
}

json CorpusStats::to_json() const {
  json hist = json::array();
  for (const auto& [start, count] : length.histogram) hist.push_back({start, count});
  return {{"sample_count", sample_count},
          {"ttr", ttr},
          {"ttr_mode", std::string(to_string(ttr_mode))},
          {"entropy", entropy},
          {"entropy_unit", std::string(to_string(entropy_unit))},
          {"length_min", length.min},
          {"length_max", length.max},
          {"length_mean", length.mean},
          {"length_bucket_width", kLengthBucketWidth},
          {"length_histogram", hist}};
}

CorpusStats CorpusStats::from_json(const json& j) {
  CorpusStats s;
  s.sample_count = j.at("sample_count");
  s.ttr = j.at("ttr");
  const auto mode = parse_ttr_mode(j.at("ttr_mode").get<std::string>());
  const auto unit = parse_entropy_unit(j.at("entropy_unit").get<std::string>());
  if (!mode || !unit) throw ValidationError("corpus stats: unknown ttr_mode or entropy_unit");
  s.ttr_mode = *mode;
  s.entropy = j.at("entropy");
  s.entropy_unit = *unit;
  s.length.min = j.at("length_min");
  s.length.max = j.at("length_max");
  s.length.mean = j.at("length_mean");
  for (const auto& b : j.at("length_histogram")) s.length.histogram.emplace_back(b.at(0), b.at(1));
  return s;
}

std::string CorpusStats::to_table() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-14s %zu\n%-14s %.4f (%s)\n%-14s %.4f %s\n%-14s %zu\n%-14s %.2f\n%-14s %zu\n",
                "samples", sample_count, "ttr", ttr, std::string(to_string(ttr_mode)).c_str(), "entropy", entropy,
                std::string(to_string(entropy_unit)).c_str(), "length_min", length.min, "length_mean", length.mean,
                "length_max", length.max);
  return buf;
}

std::string CorpusStats::histogram_csv() const {
  std::string out = "bucket_start,bucket_end,count\n";
  for (const auto& [start, count] : length.histogram) {
    out += std::to_string(start) + "," + std::to_string(start + kLengthBucketWidth) + "," + std::to_string(count) + "\n";
  }
  return out;
}

CorpusStats corpus_stats(const CorpusAccumulator& acc, TtrMode mode, EntropyUnit unit) {
  CorpusStats s;
  s.sample_count = acc.samples();
  s.ttr = acc.ttr(mode);
  s.ttr_mode = mode;
  s.entropy = acc.entropy(unit);
  s.entropy_unit = unit;
  s.length = length_stats(acc.lengths());
  return s;
}

CorpusStats analyze_corpus(const std::vector<std::string>& corpus, TtrMode mode, EntropyUnit unit) {
  CorpusAccumulator acc;
  for (const auto& t : corpus) acc.add(t);
  return corpus_stats(acc, mode, unit);
}

std::vector<DeltaRow> compare_reports(const CorpusStats& a, const CorpusStats& b) {
  if (a.entropy_unit != b.entropy_unit) throw ValidationError("compare: entropy units differ");
  if (a.ttr_mode != b.ttr_mode) throw ValidationError("compare: TTR modes differ");
  auto row = [](std::string name, double x, double y) { return DeltaRow{std::move(name), x, y, x - y}; };
  return {row("sample_count", static_cast<double>(a.sample_count), static_cast<double>(b.sample_count)),
          row("ttr", a.ttr, b.ttr),
          row("entropy", a.entropy, b.entropy),
          row("length_min", static_cast<double>(a.length.min), static_cast<double>(b.length.min)),
          row("length_mean", a.length.mean, b.length.mean),
          row("length_max", static_cast<double>(a.length.max), static_cast<double>(b.length.max))};
}

std::string format_delta_table(const std::vector<DeltaRow>& rows, std::string_view a_name, std::string_view b_name,
                               int precision) {
  auto fmt = [precision](double v, bool sign) {
    char buf[64];
    std::snprintf(buf, sizeof buf, sign ? "%+.*f" : "%.*f", precision, v);
    std::string s = buf;
    if (sign && s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s[0] = '+';
    return s;
  };
  std::size_t w0 = 6, w1 = a_name.size(), w2 = b_name.size(), w3 = 5;
  std::vector<std::array<std::string, 4>> cells;
  for (const auto& r : rows) {
    cells.push_back({r.metric, fmt(r.a, false), fmt(r.b, false), fmt(r.delta, true)});
    w0 = std::max(w0, cells.back()[0].size());
    w1 = std::max(w1, cells.back()[1].size());
    w2 = std::max(w2, cells.back()[2].size());
    w3 = std::max(w3, cells.back()[3].size());
  }
  auto line = [&](std::string_view c0, std::string_view c1, std::string_view c2, std::string_view c3) {
    std::string s(c0);
    s.append(w0 - c0.size() + 2, ' ');
    s.append(w1 - c1.size(), ' ');
    s += c1;
    s.append(2 + w2 - c2.size(), ' ');
    s += c2;
    s.append(2 + w3 - c3.size(), ' ');
    s += c3;
    return s + "\n";
  };
  std::string out = line("metric", a_name, b_name, "delta");
  for (const auto& c : cells) out += line(c[0], c[1], c[2], c[3]);
  return out;
}

}  // namespace textsynth
