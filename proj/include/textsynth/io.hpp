#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace textsynth {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Sorted keys, no insignificant whitespace, UTF-8 (throws on invalid bytes).
inline std::string canonical_json(const json& value) { return value.dump(); }

/// Writes through a sibling temp file and renames over the target.
void write_file_atomic(const fs::path& path, std::string_view content);

std::string read_file(const fs::path& path);

/// Non-empty lines of a text file, without the trailing newline.
std::vector<std::string> read_lines(const fs::path& path);

std::uint64_t file_crc64(const fs::path& path);

std::string hex64(std::uint64_t value);

/// Append-only line writer; each line is flushed before append() returns.
class LineAppender {
 public:
  explicit LineAppender(const fs::path& path);
  void append(std::string_view line);

 private:
  std::ofstream out_;
};

/// Records of an append-only checkpoint file. Every line must be a complete,
/// newline-terminated JSON object with `key` and "status"; otherwise throws
/// ValidationError telling how far to truncate.
std::vector<json> read_checkpoint(const fs::path& path, std::string_view key);

void require_file(const fs::path& path, std::string_view what);

}  // namespace textsynth
