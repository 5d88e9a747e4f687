#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace textsynth {

bool is_valid_utf8(std::string_view text);

/// Strips leading and trailing Unicode whitespace.
std::string_view trim(std::string_view text);

/// Splits on runs of Unicode whitespace. Punctuation stays attached.
/// This is the corpus tokenizer used for filter thresholds and caption
/// token counts.
std::vector<std::string_view> split_whitespace(std::string_view text);

inline std::size_t corpus_token_count(std::string_view text) {
  return split_whitespace(text).size();
}

/// Tokenizer for diversity metrics: ASCII-lowercase, whitespace split,
/// leading/trailing ASCII punctuation stripped, empty tokens dropped.
std::vector<std::string> metric_tokens(std::string_view text);

std::string to_lower_ascii(std::string_view text);

}  // namespace textsynth
