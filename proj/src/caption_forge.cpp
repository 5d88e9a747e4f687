#include "textsynth/caption_forge.hpp"

#include <unordered_map>

#include "textsynth/text.hpp"

namespace textsynth {
namespace {

constexpr std::string_view kExpansionSystem =
    "You write precise, vivid descriptions of photographs for a vision-language dataset.";

constexpr std::string_view kExpansionInstructions =
    "Expand the caption seed below into a detailed, self-contained description of one single image.\n"
    "Add concrete visual detail: the objects present, their attributes and colors, spatial layout, "
    "lighting, background and setting.\n"
    "Do not contradict or drop any fact stated in the seed.\n"
    "Output only the description, as one paragraph, with no preamble.\n\n"
    "Seed caption: ";

}  // namespace

void DiverseCaption::validate() const {
  if (id.empty() || seed_id.empty()) throw ValidationError("caption: empty id or seed_id");
  if (token_count != corpus_token_count(text)) {
    throw ValidationError("caption " + id + ": token_count does not match text");
  }
}

json DiverseCaption::to_json() const {
  return {{"id", id}, {"seed_id", seed_id}, {"text", text}, {"token_count", token_count}, {"model_id", model_id}};
}

DiverseCaption DiverseCaption::from_json(const json& j) {
  DiverseCaption c{j.at("id").get<std::string>(), j.at("seed_id").get<std::string>(),
                   j.at("text").get<std::string>(), j.at("token_count").get<std::size_t>(),
                   j.value("model_id", std::string())};
  c.validate();
  return c;
}

std::string caption_id_for_seed(std::string_view seed_id) { return "c-" + std::string(seed_id); }

void CaptionBounds::validate() const {
  if (min_tokens > max_tokens) throw ValidationError("caption bounds: min_tokens > max_tokens");
}

ChatPrompt build_expansion_prompt(const CaptionSeed& seed, const GenerationParams& params) {
  ChatPrompt p;
  p.system = std::string(kExpansionSystem);
  p.user = std::string(kExpansionInstructions);
  p.user += kSeedOpen;
  p.user += seed.text;
  p.user += kSeedClose;
  p.params = params;
  return p;
}

std::optional<std::string> extract_expansion_seed(const ChatPrompt& prompt) {
  if (!prompt.user.starts_with(kExpansionInstructions)) return std::nullopt;
  const auto open = kExpansionInstructions.size();
  if (prompt.user.compare(open, kSeedOpen.size(), kSeedOpen) != 0) return std::nullopt;
  const auto close = prompt.user.rfind(kSeedClose);
  if (close == std::string::npos || close < open + kSeedOpen.size()) return std::nullopt;
  return prompt.user.substr(open + kSeedOpen.size(), close - open - kSeedOpen.size());
}

namespace {

DiverseCaption make_caption(const CaptionSeed& seed, const CompletionResult& r) {
  std::string text(trim(r.text));
  const std::size_t tokens = corpus_token_count(text);
  return {caption_id_for_seed(seed.id), seed.id, std::move(text), tokens, r.model_id};
}

// Runs all seeds through the gateway in rounds; bounds failures are re-issued
// in the next round until their retry budget is spent.
std::vector<std::optional<ExpansionOutcome>> expand_many(LlmGateway& gateway,
                                                         const std::vector<const CaptionSeed*>& seeds,
                                                         const CaptionBounds& bounds,
                                                         std::size_t bounds_retries,
                                                         const GenerationParams& params,
                                                         std::size_t parallelism,
                                                         std::vector<std::optional<GatewayError>>& errors) {
  std::vector<std::optional<ExpansionOutcome>> out(seeds.size());
  errors.assign(seeds.size(), std::nullopt);
  std::vector<std::size_t> pending(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) pending[i] = i;

  for (std::size_t round = 0; round <= bounds_retries && !pending.empty(); ++round) {
    std::vector<ChatPrompt> prompts;
    prompts.reserve(pending.size());
    for (std::size_t i : pending) prompts.push_back(build_expansion_prompt(*seeds[i], params));
    auto results = gateway.complete_batch(prompts, parallelism);

    std::vector<std::size_t> again;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      const std::size_t i = pending[k];
      if (!results[k].ok()) {
        const auto& e = *results[k].error;
        errors[i] = GatewayError("seed " + seeds[i]->id + ": " + e.what(), e.status(), e.attempts());
        out[i].reset();
        continue;
      }
      ExpansionOutcome o{seeds[i]->id, make_caption(*seeds[i], *results[k].result), std::nullopt, round + 1};
      if (!bounds.accepts(o.caption.token_count)) {
        o.reject = "token_count " + std::to_string(o.caption.token_count) + " outside [" +
                   std::to_string(bounds.min_tokens) + ", " + std::to_string(bounds.max_tokens) + "]";
        again.push_back(i);
      }
      out[i] = std::move(o);
    }
    pending = std::move(again);
  }
  return out;
}

}  // namespace

ExpansionOutcome expand_seed(LlmGateway& gateway, const CaptionSeed& seed, const CaptionBounds& bounds,
                             std::size_t bounds_retries, const GenerationParams& params) {
  bounds.validate();
  std::vector<std::optional<GatewayError>> errors;
  auto out = expand_many(gateway, {&seed}, bounds, bounds_retries, params, 1, errors);
  if (errors[0]) throw *errors[0];
  return std::move(*out[0]);
}

Stage1Paths Stage1Paths::in(const fs::path& dir) {
  return {dir / "captions.jsonl", dir / "captions.quarantine.jsonl", dir / "captions.ckpt.jsonl",
          dir / "stage1.manifest.json"};
}

json StageSummary::manifest_json() const {
  return {{"total", total}, {"accepted", accepted}, {"rejected", rejected}};
}

StageSummary run_stage1(LlmGateway& gateway, const std::vector<CaptionSeed>& seeds,
                        const Stage1Options& options, const Stage1Paths& paths) {
  options.bounds.validate();
  std::unordered_map<std::string, json> done;
  for (auto& r : read_checkpoint(paths.checkpoint, "seed_id")) {
    std::string id = r.at("seed_id").get<std::string>();
    done.insert_or_assign(std::move(id), std::move(r));
  }

  StageSummary summary;
  summary.total = seeds.size();
  summary.resumed = done.size();
  const std::size_t calls_before = gateway.ledger().totals().calls;

  std::vector<const CaptionSeed*> todo;
  for (const auto& s : seeds) {
    if (!done.contains(s.id)) todo.push_back(&s);
  }

  LineAppender checkpoint(paths.checkpoint);
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
  for (std::size_t begin = 0; begin < todo.size(); begin += chunk) {
    const std::vector<const CaptionSeed*> part(todo.begin() + begin,
                                               todo.begin() + std::min(todo.size(), begin + chunk));
    std::vector<std::optional<GatewayError>> errors;
    auto outcomes = expand_many(gateway, part, options.bounds, options.bounds_retries, options.params,
                                options.parallelism, errors);
    std::optional<GatewayError> first_error;
    for (std::size_t i = 0; i < part.size(); ++i) {
      if (errors[i]) {
        if (!first_error) first_error = errors[i];
        continue;
      }
      const auto& o = *outcomes[i];
      json record = {{"seed_id", o.seed_id}, {"caption", o.caption.to_json()}};
      record["status"] = o.reject ? "rejected" : "accepted";
      if (o.reject) record["reason"] = *o.reject;
      checkpoint.append(canonical_json(record));
      done.emplace(o.seed_id, std::move(record));
    }
    if (first_error) {
      summary.gateway_calls = gateway.ledger().totals().calls - calls_before;
      throw *first_error;
    }
  }
  summary.gateway_calls = gateway.ledger().totals().calls - calls_before;

  std::string captions;
  std::string quarantine;
  for (const auto& s : seeds) {
    const json& r = done.at(s.id);
    if (r.at("status") == "accepted") {
      captions += canonical_json(r.at("caption")) + "\n";
      ++summary.accepted;
    } else {
      json q = r.at("caption");
      q["reason"] = r.value("reason", std::string("rejected"));
      quarantine += canonical_json(q) + "\n";
      ++summary.rejected;
    }
  }
  write_file_atomic(paths.captions, captions);
  write_file_atomic(paths.quarantine, quarantine);
  write_file_atomic(paths.manifest, summary.manifest_json().dump(2) + "\n");
  return summary;
}

std::vector<DiverseCaption> load_captions(const fs::path& path) {
  std::vector<DiverseCaption> out;
  for (const auto& line : read_lines(path)) out.push_back(DiverseCaption::from_json(json::parse(line)));
  return out;
}

}  // namespace textsynth
