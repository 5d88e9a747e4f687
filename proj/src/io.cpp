#include "textsynth/io.hpp"

#include <array>
#include <cstdio>
#include <sstream>

#include "textsynth/error.hpp"
#include "textsynth/hash.hpp"

namespace textsynth {
namespace {

constexpr std::array<std::uint64_t, 256> make_crc_table() {
  constexpr std::uint64_t kPoly = 0xC96C5795D7870F42ull;
  std::array<std::uint64_t, 256> table{};
  for (std::uint64_t i = 0; i < 256; ++i) {
    std::uint64_t crc = i;
    for (int bit = 0; bit < 8; ++bit) crc = (crc & 1) ? (crc >> 1) ^ kPoly : crc >> 1;
    table[i] = crc;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

}  // namespace

void Crc64::update(std::span<const std::byte> data) {
  std::uint64_t crc = state_;
  for (std::byte b : data) {
    crc = kCrcTable[(crc ^ static_cast<std::uint8_t>(b)) & 0xFF] ^ (crc >> 8);
  }
  state_ = crc;
}

void Crc64::update(std::string_view data) {
  update(std::as_bytes(std::span(data.data(), data.size())));
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::uint64_t file_crc64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Crc64 crc;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    crc.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return crc.value();
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

LineAppender::LineAppender(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error("cannot open " + path.string() + " for appending");
}

void LineAppender::append(std::string_view line) {
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.put('\n');
  out_.flush();
  if (!out_) throw Error("append failed");
}

std::vector<json> read_checkpoint(const fs::path& path, std::string_view key) {
  std::vector<json> records;
  if (!fs::exists(path)) return records;
  const std::string content = read_file(path);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < content.size()) {
    const auto end = content.find('\n', start);
    ++line_no;
    const bool terminated = end != std::string::npos;
    const std::string_view line(content.data() + start, (terminated ? end : content.size()) - start);
    json record;
    bool ok = terminated;
    if (ok) {
      try {
        record = json::parse(line);
        ok = record.is_object() && record.contains(key) && record.contains("status");
      } catch (const json::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      throw ValidationError("checkpoint " + path.string() + " is corrupt at line " +
                            std::to_string(line_no) + "; truncate it to the first " +
                            std::to_string(line_no - 1) +
                            " lines (the last valid record) and rerun to resume");
    }
    records.push_back(std::move(record));
    start = end + 1;
  }
  return records;
}

void require_file(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) {
    throw UpstreamMissing(std::string(what) + " not found: " + path.string());
  }
}

}  // namespace textsynth
