#include "textsynth/text.hpp"

#include <cstdint>
#include <optional>

namespace textsynth {
namespace {

struct Decoded {
  char32_t code;
  std::size_t length;
};

std::optional<Decoded> decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return Decoded{b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return std::nullopt;
  }
  if (pos + len > s.size()) return std::nullopt;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  return Decoded{cp, len};
}

bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

// Length of the whitespace code point at pos, or 0. Invalid bytes are not space.
std::size_t space_at(std::string_view s, std::size_t pos) {
  const auto d = decode_utf8(s, pos);
  if (d && is_unicode_space(d->code)) return d->length;
  return 0;
}

std::size_t char_len_at(std::string_view s, std::size_t pos) {
  const auto d = decode_utf8(s, pos);
  return d ? d->length : 1;
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
         (u >= 123 && u <= 126);
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  for (std::size_t pos = 0; pos < text.size();) {
    const auto d = decode_utf8(text, pos);
    if (!d) return false;
    pos += d->length;
  }
  return true;
}

std::string_view trim(std::string_view text) {
  std::size_t begin = 0;
  while (begin < text.size()) {
    const std::size_t n = space_at(text, begin);
    if (n == 0) break;
    begin += n;
  }
  // Scan forward to find the end of the last non-space code point.
  std::size_t end = begin;
  for (std::size_t pos = begin; pos < text.size();) {
    const std::size_t n = space_at(text, pos);
    if (n > 0) {
      pos += n;
    } else {
      pos += char_len_at(text, pos);
      end = pos;
    }
  }
  return text.substr(begin, end - begin);
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  std::size_t start = std::string_view::npos;
  while (pos < text.size()) {
    const std::size_t n = space_at(text, pos);
    if (n > 0) {
      if (start != std::string_view::npos) {
        tokens.push_back(text.substr(start, pos - start));
        start = std::string_view::npos;
      }
      pos += n;
    } else {
      if (start == std::string_view::npos) start = pos;
      pos += char_len_at(text, pos);
    }
  }
  if (start != std::string_view::npos) tokens.push_back(text.substr(start));
  return tokens;
}

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (std::string_view tok : split_whitespace(text)) {
    while (!tok.empty() && is_ascii_punct(tok.front())) tok.remove_prefix(1);
    while (!tok.empty() && is_ascii_punct(tok.back())) tok.remove_suffix(1);
    if (!tok.empty()) out.push_back(to_lower_ascii(tok));
  }
  return out;
}

}  // namespace textsynth
