#pragma once

// Seed set construction: ingest + filter raw captions, keep one caption per
// image, and expand fine-grained labels through per-domain templates.

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "textsynth/io.hpp"

namespace textsynth {

enum class SeedSource { ManualAnnotated, WebCrawled, DomainTemplate };

std::string_view to_string(SeedSource source);
std::optional<SeedSource> parse_seed_source(std::string_view name);

struct CaptionSeed {
  std::string id;
  std::string text;
  SeedSource source = SeedSource::WebCrawled;
  std::optional<std::string> image_key;
  std::optional<std::string> domain_label;
  std::optional<std::string> template_id;

  /// Throws ValidationError naming the violated invariant.
  void validate() const;

  json to_json() const;
  static CaptionSeed from_json(const json& j);

  friend bool operator==(const CaptionSeed&, const CaptionSeed&) = default;
};

struct FilterPolicy {
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 100;
  double max_nonalpha_ratio = 0.2;
  // Case-insensitive substrings; entries prefixed with "re:" are ECMAScript regexes.
  std::vector<std::string> reject_patterns = default_reject_patterns();

  static std::vector<std::string> default_reject_patterns();

  void validate() const;

  /// Empty when the text passes; otherwise a stable reason code.
  std::optional<std::string> rejection_reason(std::string_view text) const;

  json to_json() const;
  static FilterPolicy from_json(const json& j);
};

/// Fraction of non-whitespace code points that are not letters. Any non-ASCII
/// code point is counted as a letter.
double nonalpha_ratio(std::string_view text);

struct IngestStats {
  std::size_t records = 0;
  std::size_t emitted = 0;
  std::map<std::string, std::size_t> rejected;  // reason -> count

  std::size_t rejected_total() const;
  json to_json() const;
};

/// FilterPolicy with its reject patterns compiled once.
class CompiledFilter {
 public:
  explicit CompiledFilter(const FilterPolicy& policy);
  std::optional<std::string> rejection_reason(std::string_view text) const;

 private:
  struct Pattern {
    std::string label;
    std::string needle;  // lowercased substring, empty if regex
    std::optional<std::regex> regex;
  };

  FilterPolicy policy_;
  std::vector<Pattern> patterns_;
};

/// Streaming ingestion of one JSON record per line:
/// {text, source, image_key?, domain_label?}. Malformed lines are counted
/// under "malformed" and skipped.
class SeedIngestor {
 public:
  explicit SeedIngestor(FilterPolicy policy);

  std::optional<CaptionSeed> push(std::string_view line);
  const IngestStats& stats() const { return stats_; }

 private:
  CompiledFilter filter_;
  IngestStats stats_;
};

std::vector<CaptionSeed> ingest_captions(const std::vector<std::string>& lines,
                                         const FilterPolicy& policy,
                                         IngestStats* stats = nullptr);

/// Keeps one seed per image_key: most corpus tokens, then lexicographically
/// smallest text. Survivors take the position of their key's first
/// occurrence; keyless seeds pass through in place.
std::vector<CaptionSeed> dedupe_by_image(const std::vector<CaptionSeed>& seeds);

class TemplateSet {
 public:
  static constexpr std::string_view kPlaceholder = "<label>";

  /// Throws ValidationError if any template lacks exactly one placeholder or
  /// per_label_count exceeds the number of templates.
  TemplateSet(std::string domain, std::vector<std::string> templates,
              std::size_t per_label_count = 10);

  const std::string& domain() const { return domain_; }
  const std::vector<std::string>& templates() const { return templates_; }
  std::size_t per_label_count() const { return per_label_count_; }

  std::string render(std::size_t index, std::string_view label) const;

 private:
  std::string domain_;
  std::vector<std::string> templates_;
  std::size_t per_label_count_;
};

struct DomainLabel {
  std::string domain;
  std::string label;
};

using TemplateLibrary = std::map<std::string, TemplateSet, std::less<>>;

/// Parses the templates file (JSON map domain -> list of templates).
TemplateLibrary load_template_library(const json& j, std::size_t per_label_count);

std::vector<DomainLabel> parse_labels(const std::vector<std::string>& lines);

/// Each label draws per_label_count distinct templates of its domain. Label k
/// uses its own counter stream keyed by (rng_seed, k).
std::vector<CaptionSeed> expand_domain_labels(const std::vector<DomainLabel>& labels,
                                              const TemplateLibrary& templates,
                                              std::uint64_t rng_seed);

}  // namespace textsynth
