#pragma once

#include <cstdint>

#include "textsynth/llm_gateway.hpp"

namespace textsynth {

/// Offline stand-in for an instruction-following model. Expansion prompts get
/// a 60-200 token description that restates the seed; task prompts get a
/// dialogue in the stage-2 grammar built from words of the caption. Any other
/// prompt is echoed. Output is a pure function of (seed, prompt).
MockBackend::Responder synthetic_responder(std::uint64_t seed);

}  // namespace textsynth
