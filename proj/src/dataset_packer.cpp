#include "textsynth/dataset_packer.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <exception>
#include <map>
#include <mutex>
#include <unordered_map>

#include "textsynth/hash.hpp"

namespace textsynth {
namespace {

template <class T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(std::string_view bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

std::string shard_name(const std::string& prefix, std::size_t index, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return prefix + "-" + buf + ext;
}

const std::string& record_id(const DiverseCaption& c) { return c.id; }
const std::string& record_id(const InstructionSample& s) { return s.id; }

}  // namespace

std::string encode_shard(const ShardHeader& header, std::span<const float> data) {
  if (data.size() != header.count * header.dim) throw ValidationError("shard: data size does not match header");
  std::string out;
  out.reserve(kShardHeaderBytes + data.size() * 4 + kShardFooterBytes);
  out.append(kShardMagic, 4);
  put_le<std::uint16_t>(out, header.version);
  put_le<std::uint32_t>(out, header.dim);
  put_le<std::uint64_t>(out, header.count);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(header.modality));
  put_le<std::uint8_t>(out, header.normalized ? 1 : 0);
  for (float x : data) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  const auto payload = std::string_view(out).substr(kShardHeaderBytes);
  put_le<std::uint64_t>(out, Crc64::of(payload));
  return out;
}

Shard decode_shard(std::string_view bytes, const std::string& name) {
  using Kind = ShardFormatError::Kind;
  if (bytes.size() < kShardHeaderBytes) throw ShardFormatError(Kind::LengthMismatch, name + ": payload length mismatch (truncated header)");
  if (std::memcmp(bytes.data(), kShardMagic, 4) != 0) throw ShardFormatError(Kind::BadMagic, name + ": bad magic");
  Shard s;
  s.header.version = get_le<std::uint16_t>(bytes, 4);
  if (s.header.version != kShardVersion) {
    throw ShardFormatError(Kind::BadVersion, name + ": unsupported version " + std::to_string(s.header.version));
  }
  s.header.dim = get_le<std::uint32_t>(bytes, 6);
  s.header.count = get_le<std::uint64_t>(bytes, 10);
  const auto modality = modality_from_code(get_le<std::uint8_t>(bytes, 18));
  if (!modality) throw ShardFormatError(Kind::BadModality, name + ": unknown modality code");
  s.header.modality = *modality;
  const auto flag = get_le<std::uint8_t>(bytes, 19);
  if (flag > 1) throw ShardFormatError(Kind::BadModality, name + ": normalized flag must be 0 or 1");
  s.header.normalized = flag == 1;

  const unsigned __int128 payload = static_cast<unsigned __int128>(s.header.count) * s.header.dim * 4;
  if (payload + kShardHeaderBytes + kShardFooterBytes != bytes.size()) {
    throw ShardFormatError(Kind::LengthMismatch, name + ": payload length mismatch");
  }
  const auto body = bytes.substr(kShardHeaderBytes, static_cast<std::size_t>(payload));
  const auto stored = get_le<std::uint64_t>(bytes, kShardHeaderBytes + body.size());
  if (Crc64::of(body) != stored) throw ShardFormatError(Kind::Checksum, name + ": checksum mismatch");
  s.data.resize(body.size() / 4);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(body, i * 4));
  return s;
}

void write_shard(const fs::path& path, const EmbeddingBatch& batch) {
  ShardHeader h;
  h.dim = static_cast<std::uint32_t>(batch.dim());
  h.count = batch.size();
  h.modality = batch.modality();
  h.normalized = batch.normalized();
  write_file_atomic(path, encode_shard(h, batch.data()));
}

Shard read_shard(const fs::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception& e) {
    throw ShardFormatError(ShardFormatError::Kind::Io, e.what());
  }
  return decode_shard(bytes, path.filename().string());
}

void write_mean(const fs::path& shard_path, const MeanVector& mu) {
  mu.validate();
  EmbeddingBatch b(mu.dim(), mu.modality, false);
  std::vector<float> row(mu.values.begin(), mu.values.end());
  b.push_back("mean", row);
  write_shard(shard_path, b);
  auto sidecar = shard_path;
  sidecar.replace_extension(".json");
  write_file_atomic(sidecar, canonical_json(mu.sidecar_json()) + "\n");
}

MeanVector read_mean(const fs::path& shard_path) {
  const Shard s = read_shard(shard_path);
  if (s.header.count != 1) throw ValidationError(shard_path.string() + ": a mean shard holds exactly one row");
  auto sidecar = shard_path;
  sidecar.replace_extension(".json");
  const json side = json::parse(read_file(sidecar));
  MeanVector mu;
  mu.values.assign(s.data.begin(), s.data.end());
  mu.modality = s.header.modality;
  mu.sample_count = side.at("count").get<std::size_t>();
  if (side.at("dim").get<std::size_t>() != s.header.dim) throw ValidationError(sidecar.string() + ": dim disagrees with shard");
  mu.validate();
  return mu;
}

DatasetWriter::DatasetWriter(fs::path out_dir, PackOptions options)
    : out_dir_(std::move(out_dir)), options_(std::move(options)) {
  if (options_.shard_rows == 0) throw ConfigError("pack: shard_rows must be positive");
  fs::create_directories(out_dir_);
  fs::remove(out_dir_ / "manifest.json");
}

DatasetWriter::~DatasetWriter() {
  if (finished_) return;
  std::error_code ec;
  for (const auto& p : written_) fs::remove(p, ec);
}

json DatasetWriter::file_entry(const std::string& rel, const std::string& role, std::size_t count) {
  const fs::path p = out_dir_ / rel;
  return {{"path", rel},
          {"role", role},
          {"count", count},
          {"bytes", static_cast<std::uint64_t>(fs::file_size(p))},
          {"crc64", hex64(file_crc64(p))}};
}

void DatasetWriter::note_batch(const EmbeddingBatch& reps) {
  if (dim_ && *dim_ != reps.dim()) throw ValidationError("pack: vector dimension differs between datasets");
  if (normalized_ && *normalized_ != reps.normalized()) {
    throw ValidationError("pack: normalization flag differs between datasets");
  }
  dim_ = reps.dim();
  normalized_ = reps.normalized();
}

template <class Record>
DatasetWriter::Group DatasetWriter::write_group(const std::string& kind, const std::string& text_prefix,
                                                const std::string& reps_prefix, const std::string& ids_prefix,
                                                const std::vector<Record>& records, const EmbeddingBatch& reps) {
  reps.validate();
  note_batch(reps);
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (!by_id.emplace(reps.ids()[i], i).second) throw ValidationError("pack: duplicate vector id " + reps.ids()[i]);
  }
  std::vector<std::size_t> order;
  order.reserve(records.size());
  for (const auto& r : records) {
    const auto it = by_id.find(record_id(r));
    if (it == by_id.end()) throw ValidationError("unpaired id: " + record_id(r) + " has no vector");
    order.push_back(it->second);
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    std::string first;
    for (std::size_t i = 0; i < reps.size() && first.empty(); ++i) {
      if (by_id.count(reps.ids()[i])) first = reps.ids()[i];
    }
    throw ValidationError("unpaired id: vector " + first + " has no " + kind + " record");
  }

  const std::size_t n = records.size();
  const std::size_t shards = std::max<std::size_t>(1, (n + options_.shard_rows - 1) / options_.shard_rows);
  Group g;
  g.kind = kind;
  g.count = n;
  std::vector<std::vector<std::string>> names(shards);
  std::exception_ptr failure;
  std::mutex mu;

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t ss = 0; ss < static_cast<std::int64_t>(shards); ++ss) {
    const auto s = static_cast<std::size_t>(ss);
    const std::size_t begin = s * options_.shard_rows;
    const std::size_t end = std::min(n, begin + options_.shard_rows);
    const std::string text_rel = shard_name(text_prefix, s, ".jsonl");
    const std::string reps_rel = shard_name(reps_prefix, s, ".unic");
    const std::string ids_rel = shard_name(ids_prefix, s, ".txt");
    try {
      std::string text, ids;
      EmbeddingBatch chunk(reps.dim(), reps.modality(), reps.normalized());
      for (std::size_t i = begin; i < end; ++i) {
        records[i].validate();
        text += canonical_json(records[i].to_json());
        text += '\n';
        ids += record_id(records[i]);
        ids += '\n';
        chunk.push_back(reps.ids()[order[i]], reps.row(order[i]));
      }
      {
        std::lock_guard lock(mu);
        for (const auto& rel : {text_rel, reps_rel, ids_rel}) written_.push_back(out_dir_ / rel);
      }
      write_file_atomic(out_dir_ / text_rel, text);
      write_shard(out_dir_ / reps_rel, chunk);
      write_file_atomic(out_dir_ / ids_rel, ids);
      names[s] = {text_rel, reps_rel, ids_rel};
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = s * options_.shard_rows;
    const std::size_t count = std::min(n, begin + options_.shard_rows) - begin;
    g.files.push_back(file_entry(names[s][0], kind + "_text", count));
    g.files.push_back(file_entry(names[s][1], kind + "_vectors", count));
    g.files.push_back(file_entry(names[s][2], kind + "_ids", count));
  }
  return g;
}

void DatasetWriter::write_pretrain(const std::vector<DiverseCaption>& captions, const EmbeddingBatch& reps) {
  pretrain_ = write_group("pretrain", "captions", "reps", "ids", captions, reps);
}

void DatasetWriter::write_instruct(const std::vector<InstructionSample>& samples, const EmbeddingBatch& reps) {
  instruct_ = write_group("instruct", "instruct", "instruct-reps", "instruct-ids", samples, reps);
}

void DatasetWriter::write_mean(const std::string& name, const MeanVector& mu) {
  fs::create_directories(out_dir_ / "means");
  const std::string rel = "means/" + name + ".unic";
  const std::string side_rel = "means/" + name + ".json";
  written_.push_back(out_dir_ / rel);
  written_.push_back(out_dir_ / side_rel);
  textsynth::write_mean(out_dir_ / rel, mu);
  means_.push_back({{"name", name},
                    {"path", rel},
                    {"sidecar", side_rel},
                    {"dim", mu.dim()},
                    {"count", mu.sample_count},
                    {"modality", std::string(to_string(mu.modality))},
                    {"files", {file_entry(rel, "mean", 1), file_entry(side_rel, "mean_sidecar", 1)}}});
}

json DatasetWriter::finish() {
  json files = json::array();
  json counts = json::object();
  for (const auto* g : {&pretrain_, &instruct_}) {
    if (!*g) continue;
    counts[(*g)->kind] = (*g)->count;
    for (const auto& f : (*g)->files) files.push_back(f);
  }
  for (const auto& m : means_) {
    for (const auto& f : m.at("files")) files.push_back(f);
  }
  json means = json::array();
  for (auto m : means_) {
    m.erase("files");
    means.push_back(m);
  }
  const json manifest = {{"dataset_name", options_.dataset_name},
                         {"format_version", kShardVersion},
                         {"dim", dim_.value_or(0)},
                         {"encoder_id", options_.encoder_id},
                         {"normalized", normalized_.value_or(false)},
                         {"renormalized", options_.renormalized},
                         {"counts", counts},
                         {"files", files},
                         {"means", means},
                         {"config_hash", options_.config_hash},
                         {"cost", options_.cost},
                         {"created_at", options_.created_at}};
  write_file_atomic(out_dir_ / "manifest.json", canonical_json(manifest) + "\n");
  finished_ = true;
  return manifest;
}

json write_pretrain_dataset(const std::vector<DiverseCaption>& captions, const EmbeddingBatch& reps,
                            const fs::path& out_dir, const PackOptions& options) {
  DatasetWriter w(out_dir, options);
  w.write_pretrain(captions, reps);
  return w.finish();
}

json write_instruct_dataset(const std::vector<InstructionSample>& samples, const EmbeddingBatch& reps,
                            const fs::path& out_dir, const PackOptions& options) {
  DatasetWriter w(out_dir, options);
  w.write_instruct(samples, reps);
  return w.finish();
}

bool VerifyReport::ok() const {
  if (files.empty()) return false;
  for (const auto& f : files) {
    if (!f.ok) return false;
  }
  return true;
}

json VerifyReport::to_json() const {
  json list = json::array();
  for (const auto& f : files) list.push_back({{"path", f.path}, {"ok", f.ok}, {"detail", f.detail}});
  return {{"ok", ok()}, {"files", list}};
}

namespace {

FileCheck check_file(const fs::path& dir, const json& entry, std::size_t dim) {
  FileCheck fc;
  fc.path = entry.at("path").get<std::string>();
  const fs::path p = dir / fc.path;
  const std::string role = entry.at("role");
  const std::size_t count = entry.at("count");
  try {
    if (!fs::exists(p)) {
      fc.detail = "missing";
      return fc;
    }
    if (hex64(file_crc64(p)) != entry.at("crc64").get<std::string>()) {
      fc.detail = "file checksum mismatch";
      return fc;
    }
    if (role.ends_with("_vectors") || role == "mean") {
      const Shard s = read_shard(p);
      if (s.header.count != count) {
        fc.detail = "shard holds " + std::to_string(s.header.count) + " rows, manifest says " + std::to_string(count);
        return fc;
      }
      if (s.header.dim != dim) {
        fc.detail = "shard dim " + std::to_string(s.header.dim) + ", manifest says " + std::to_string(dim);
        return fc;
      }
    } else if (role.ends_with("_text") || role.ends_with("_ids")) {
      const auto lines = read_lines(p);
      if (lines.size() != count) {
        fc.detail = std::to_string(lines.size()) + " lines, manifest says " + std::to_string(count);
        return fc;
      }
      if (role.ends_with("_text")) {
        for (const auto& line : lines) {
          const json rec = json::parse(line);
          if (canonical_json(rec) != line) {
            fc.detail = "record is not canonical JSON";
            return fc;
          }
        }
      }
    }
    fc.ok = true;
    fc.detail = "ok";
  } catch (const std::exception& e) {
    fc.detail = e.what();
  }
  return fc;
}

}  // namespace

VerifyReport verify_dataset(const fs::path& out_dir) {
  const fs::path manifest_path = out_dir / "manifest.json";
  require_file(manifest_path, "dataset manifest");
  const json manifest = json::parse(read_file(manifest_path));
  const std::size_t dim = manifest.at("dim");
  VerifyReport report;
  std::map<std::string, std::size_t> totals;
  for (const auto& entry : manifest.at("files")) {
    report.files.push_back(check_file(out_dir, entry, dim));
    const std::string role = entry.at("role");
    if (role.ends_with("_vectors")) totals[role.substr(0, role.size() - 8)] += entry.at("count").get<std::size_t>();
  }
  for (const auto& [kind, expected] : manifest.at("counts").items()) {
    FileCheck fc{"counts/" + kind, false, ""};
    const std::size_t got = totals[kind];
    fc.ok = got == expected.get<std::size_t>();
    fc.detail = fc.ok ? "ok" : std::to_string(got) + " rows in shards, manifest says " + expected.dump();
    report.files.push_back(fc);
  }
  return report;
}

}  // namespace textsynth
