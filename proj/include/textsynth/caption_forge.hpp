#pragma once

// Stage 1: expand every seed into a detailed caption of one imaginary image.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textsynth/llm_gateway.hpp"
#include "textsynth/seed_corpus.hpp"

namespace textsynth {

struct DiverseCaption {
  std::string id;
  std::string seed_id;
  std::string text;
  std::size_t token_count = 0;
  std::string model_id;

  void validate() const;
  json to_json() const;
  static DiverseCaption from_json(const json& j);

  friend bool operator==(const DiverseCaption&, const DiverseCaption&) = default;
};

std::string caption_id_for_seed(std::string_view seed_id);

struct CaptionBounds {
  std::size_t min_tokens = 40;
  std::size_t max_tokens = 520;

  void validate() const;
  bool accepts(std::size_t tokens) const { return tokens >= min_tokens && tokens <= max_tokens; }
};

/// Delimiters around the embedded seed text in the expansion prompt.
inline constexpr std::string_view kSeedOpen = "<<<";
inline constexpr std::string_view kSeedClose = ">>>";

ChatPrompt build_expansion_prompt(const CaptionSeed& seed, const GenerationParams& params = {});

/// Recovers the seed text from a prompt built by build_expansion_prompt.
std::optional<std::string> extract_expansion_seed(const ChatPrompt& prompt);

struct ExpansionOutcome {
  std::string seed_id;
  DiverseCaption caption;             // the accepted caption or the last candidate
  std::optional<std::string> reject;  // set when bounds were never met
  std::size_t attempts = 0;
};

/// One seed; retries up to `bounds_retries` extra times on a bounds violation.
/// Gateway failures throw GatewayError with the seed id in the message.
ExpansionOutcome expand_seed(LlmGateway& gateway, const CaptionSeed& seed, const CaptionBounds& bounds,
                             std::size_t bounds_retries = 2, const GenerationParams& params = {});

struct Stage1Options {
  CaptionBounds bounds;
  std::size_t bounds_retries = 2;
  std::size_t parallelism = 8;
  std::size_t chunk_size = 64;
  GenerationParams params;
};

/// Files owned by stage 1 inside a work directory.
struct Stage1Paths {
  fs::path captions;
  fs::path quarantine;
  fs::path checkpoint;
  fs::path manifest;

  static Stage1Paths in(const fs::path& dir);
};

struct StageSummary {
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t resumed = 0;        // records taken from the checkpoint
  std::size_t gateway_calls = 0;  // successful calls made in this run

  json manifest_json() const;
};

/// Resumable: seeds already in the checkpoint are never sent again. Final
/// outputs are rebuilt in seed order once every seed has a record.
StageSummary run_stage1(LlmGateway& gateway, const std::vector<CaptionSeed>& seeds,
                        const Stage1Options& options, const Stage1Paths& paths);

std::vector<DiverseCaption> load_captions(const fs::path& path);

}  // namespace textsynth
