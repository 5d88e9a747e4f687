#include "textsynth/seed_corpus.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "textsynth/error.hpp"
#include "textsynth/philox.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

constexpr std::uint16_t kTemplateStreamTag = 0x5EED;

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(std::string(key) + " must be a string");
  return it->get<std::string>();
}

std::string pad(std::size_t value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) s.insert(0, width - s.size(), '0');
  return s;
}

char source_prefix(SeedSource s) {
  switch (s) {
    case SeedSource::ManualAnnotated: return 'm';
    case SeedSource::WebCrawled: return 'w';
    case SeedSource::DomainTemplate: return 'd';
  }
  return '?';
}

}  // namespace

std::string_view to_string(SeedSource source) {
  switch (source) {
    case SeedSource::ManualAnnotated: return "manual_annotated";
    case SeedSource::WebCrawled: return "web_crawled";
    case SeedSource::DomainTemplate: return "domain_template";
  }
  return "unknown";
}

std::optional<SeedSource> parse_seed_source(std::string_view name) {
  if (name == "manual_annotated") return SeedSource::ManualAnnotated;
  if (name == "web_crawled") return SeedSource::WebCrawled;
  if (name == "domain_template") return SeedSource::DomainTemplate;
  return std::nullopt;
}

void CaptionSeed::validate() const {
  if (id.empty()) throw ValidationError("seed id is empty");
  if (trim(text).empty()) throw ValidationError("seed " + id + ": text is empty after trim");
  if (source == SeedSource::DomainTemplate &&
      (!domain_label || domain_label->empty() || !template_id || template_id->empty())) {
    throw ValidationError("seed " + id + ": domain_template seed needs domain_label and template_id");
  }
  if (source == SeedSource::ManualAnnotated && (!image_key || image_key->empty())) {
    throw ValidationError("seed " + id + ": manual_annotated seed needs image_key");
  }
}

json CaptionSeed::to_json() const {
  json j = {{"id", id}, {"text", text}, {"source", std::string(to_string(source))}};
  if (image_key) j["image_key"] = *image_key;
  if (domain_label) j["domain_label"] = *domain_label;
  if (template_id) j["template_id"] = *template_id;
  return j;
}

CaptionSeed CaptionSeed::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("seed record is not an object");
  CaptionSeed s;
  s.id = j.at("id").get<std::string>();
  s.text = j.at("text").get<std::string>();
  const auto src = parse_seed_source(j.at("source").get<std::string>());
  if (!src) throw ValidationError("seed " + s.id + ": unknown source");
  s.source = *src;
  s.image_key = optional_string(j, "image_key");
  s.domain_label = optional_string(j, "domain_label");
  s.template_id = optional_string(j, "template_id");
  s.validate();
  return s;
}

std::vector<std::string> FilterPolicy::default_reject_patterns() {
  return {"http://", "https://", "www.", "re:<[a-z/!][^>]*>", "&nbsp;", "&amp;", "&quot;", "&#"};
}

void FilterPolicy::validate() const {
  if (min_tokens < 1) throw ValidationError("filter policy: min_tokens must be >= 1");
  if (min_tokens > max_tokens) throw ValidationError("filter policy: min_tokens > max_tokens");
  if (!(max_nonalpha_ratio >= 0.0 && max_nonalpha_ratio <= 1.0)) {
    throw ValidationError("filter policy: max_nonalpha_ratio must be in [0, 1]");
  }
}

json FilterPolicy::to_json() const {
  return {{"min_tokens", min_tokens},
          {"max_tokens", max_tokens},
          {"max_nonalpha_ratio", max_nonalpha_ratio},
          {"reject_patterns", reject_patterns}};
}

FilterPolicy FilterPolicy::from_json(const json& j) {
  FilterPolicy p;
  p.min_tokens = j.value("min_tokens", p.min_tokens);
  p.max_tokens = j.value("max_tokens", p.max_tokens);
  p.max_nonalpha_ratio = j.value("max_nonalpha_ratio", p.max_nonalpha_ratio);
  if (j.contains("reject_patterns")) p.reject_patterns = j.at("reject_patterns").get<std::vector<std::string>>();
  p.validate();
  return p;
}

double nonalpha_ratio(std::string_view text) {
  std::size_t total = 0;
  std::size_t nonalpha = 0;
  for (std::string_view tok : split_whitespace(text)) {
    for (std::size_t i = 0; i < tok.size(); ++i) {
      const auto c = static_cast<unsigned char>(tok[i]);
      if ((c & 0xC0) == 0x80) continue;  // continuation byte
      ++total;
      const bool alpha = c >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
      if (!alpha) ++nonalpha;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(nonalpha) / static_cast<double>(total);
}

std::optional<std::string> FilterPolicy::rejection_reason(std::string_view text) const {
  return CompiledFilter(*this).rejection_reason(text);
}

std::size_t IngestStats::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [_, count] : rejected) n += count;
  return n;
}

json IngestStats::to_json() const {
  return {{"records", records},
          {"emitted", emitted},
          {"rejected_total", rejected_total()},
          {"rejected", rejected}};
}

CompiledFilter::CompiledFilter(const FilterPolicy& policy) : policy_(policy) {
  policy_.validate();
  for (const auto& p : policy_.reject_patterns) {
    Pattern cp;
    cp.label = p;
    if (p.starts_with("re:")) {
      cp.regex.emplace(p.substr(3), std::regex::ECMAScript | std::regex::icase);
    } else {
      cp.needle = to_lower_ascii(p);
    }
    patterns_.push_back(std::move(cp));
  }
}

std::optional<std::string> CompiledFilter::rejection_reason(std::string_view text) const {
  if (text.empty()) return "empty";
  const std::string lower = to_lower_ascii(text);
  for (const auto& p : patterns_) {
    const bool hit = p.regex ? std::regex_search(lower, *p.regex) : lower.find(p.needle) != std::string::npos;
    if (hit) return "pattern:" + p.label;
  }
  const std::size_t tokens = corpus_token_count(text);
  if (tokens < policy_.min_tokens) return "too_short";
  if (tokens > policy_.max_tokens) return "too_long";
  if (nonalpha_ratio(text) > policy_.max_nonalpha_ratio) return "nonalpha_ratio";
  return std::nullopt;
}

SeedIngestor::SeedIngestor(FilterPolicy policy) : filter_(policy) {}

std::optional<CaptionSeed> SeedIngestor::push(std::string_view line) {
  const std::size_t index = ++stats_.records;
  auto reject = [&](const std::string& reason) -> std::optional<CaptionSeed> {
    ++stats_.rejected[reason];
    return std::nullopt;
  };
  if (!is_valid_utf8(line)) return reject("malformed");
  json record;
  try {
    record = json::parse(line);
  } catch (const json::exception&) {
    return reject("malformed");
  }
  if (!record.is_object() || !record.contains("text") || !record["text"].is_string() ||
      !record.contains("source") || !record["source"].is_string()) {
    return reject("malformed");
  }
  const auto source = parse_seed_source(record["source"].get<std::string>());
  if (!source || *source == SeedSource::DomainTemplate) return reject("malformed");

  CaptionSeed seed;
  seed.source = *source;
  try {
    seed.image_key = optional_string(record, "image_key");
    seed.domain_label = optional_string(record, "domain_label");
  } catch (const ValidationError&) {
    return reject("malformed");
  }
  if (seed.source == SeedSource::ManualAnnotated && (!seed.image_key || seed.image_key->empty())) {
    return reject("malformed");
  }
  seed.text = std::string(trim(record["text"].get<std::string>()));
  if (auto reason = filter_.rejection_reason(seed.text)) return reject(*reason);

  seed.id = std::string(1, source_prefix(seed.source)) + "-" + pad(index, 6);
  ++stats_.emitted;
  return seed;
}

std::vector<CaptionSeed> ingest_captions(const std::vector<std::string>& lines,
                                         const FilterPolicy& policy, IngestStats* stats) {
  SeedIngestor ingestor(policy);
  std::vector<CaptionSeed> out;
  for (const auto& line : lines) {
    if (auto seed = ingestor.push(line)) out.push_back(std::move(*seed));
  }
  if (stats) *stats = ingestor.stats();
  return out;
}

std::vector<CaptionSeed> dedupe_by_image(const std::vector<CaptionSeed>& seeds) {
  std::unordered_map<std::string, std::size_t> best;  // key -> index of current survivor
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!seeds[i].image_key) continue;
    auto [it, inserted] = best.try_emplace(*seeds[i].image_key, i);
    if (inserted) continue;
    const CaptionSeed& cur = seeds[it->second];
    const std::size_t cand_tokens = corpus_token_count(seeds[i].text);
    const std::size_t cur_tokens = corpus_token_count(cur.text);
    if (cand_tokens > cur_tokens || (cand_tokens == cur_tokens && seeds[i].text < cur.text)) {
      it->second = i;
    }
  }
  std::vector<CaptionSeed> out;
  std::unordered_map<std::string, bool> emitted;
  for (const auto& s : seeds) {
    if (!s.image_key) {
      out.push_back(s);
      continue;
    }
    if (emitted.emplace(*s.image_key, true).second) out.push_back(seeds[best.at(*s.image_key)]);
  }
  return out;
}

TemplateSet::TemplateSet(std::string domain, std::vector<std::string> templates,
                         std::size_t per_label_count)
    : domain_(std::move(domain)), templates_(std::move(templates)), per_label_count_(per_label_count) {
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    const auto& t = templates_[i];
    const auto first = t.find(kPlaceholder);
    if (first == std::string::npos || t.find(kPlaceholder, first + 1) != std::string::npos) {
      throw ValidationError("template set '" + domain_ + "': template " + std::to_string(i) +
                            " must contain exactly one <label> placeholder");
    }
  }
  if (per_label_count_ > templates_.size()) {
    throw ValidationError("template set '" + domain_ + "': per_label_count " +
                          std::to_string(per_label_count_) + " exceeds " +
                          std::to_string(templates_.size()) + " templates");
  }
}

std::string TemplateSet::render(std::size_t index, std::string_view label) const {
  std::string out = templates_.at(index);
  out.replace(out.find(kPlaceholder), kPlaceholder.size(), label);
  return out;
}

TemplateLibrary load_template_library(const json& j, std::size_t per_label_count) {
  if (!j.is_object()) throw ValidationError("templates file must be a JSON object");
  TemplateLibrary lib;
  for (const auto& [domain, list] : j.items()) {
    lib.emplace(domain, TemplateSet(domain, list.get<std::vector<std::string>>(), per_label_count));
  }
  return lib;
}

std::vector<DomainLabel> parse_labels(const std::vector<std::string>& lines) {
  std::vector<DomainLabel> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      const json j = json::parse(lines[i]);
      out.push_back({j.at("domain").get<std::string>(), j.at("label").get<std::string>()});
    } catch (const json::exception& e) {
      throw ValidationError("labels line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<CaptionSeed> expand_domain_labels(const std::vector<DomainLabel>& labels,
                                              const TemplateLibrary& templates,
                                              std::uint64_t rng_seed) {
  std::vector<CaptionSeed> out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto& [domain, label] = labels[k];
    auto it = templates.find(domain);
    if (it == templates.end()) throw ValidationError("no template set for domain '" + domain + "'");
    const TemplateSet& set = it->second;

    // Partial Fisher-Yates: the first per_label_count slots are the draw.
    const CounterStream rng(rng_seed, stream_id(kTemplateStreamTag, k));
    std::vector<std::size_t> order(set.templates().size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < set.per_label_count(); ++i) {
      const std::size_t j = i + rng.below(i, order.size() - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < set.per_label_count(); ++i) {
      CaptionSeed s;
      s.id = "d-" + pad(k + 1, 6) + "-" + pad(i, 2);
      s.text = set.render(order[i], label);
      s.source = SeedSource::DomainTemplate;
      s.domain_label = label;
      s.template_id = domain + "#" + std::to_string(order[i]);
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace textsynth
