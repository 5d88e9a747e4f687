#pragma once

// On-disk dataset: JSON-lines text shards, binary vector shards and ordered
// id files, bound together by manifest.json (written last).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "textsynth/caption_forge.hpp"
#include "textsynth/embedding.hpp"
#include "textsynth/error.hpp"
#include "textsynth/instruction_forge.hpp"
#include "textsynth/io.hpp"
#include "textsynth/modality_transfer.hpp"

namespace textsynth {

inline constexpr char kShardMagic[4] = {'U', 'N', 'I', 'C'};
inline constexpr std::uint16_t kShardVersion = 1;
inline constexpr std::size_t kShardHeaderBytes = 20;
inline constexpr std::size_t kShardFooterBytes = 8;

struct ShardHeader {
  std::uint16_t version = kShardVersion;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  Modality modality = Modality::Text;
  bool normalized = false;
};

struct Shard {
  ShardHeader header;
  std::vector<float> data;

  std::span<const float> row(std::size_t i) const { return {data.data() + i * header.dim, header.dim}; }
};

class ShardFormatError : public ValidationError {
 public:
  enum class Kind { Io, BadMagic, BadVersion, BadModality, LengthMismatch, Checksum };
  ShardFormatError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string encode_shard(const ShardHeader& header, std::span<const float> data);
Shard decode_shard(std::string_view bytes, const std::string& name = "shard");

void write_shard(const fs::path& path, const EmbeddingBatch& batch);
Shard read_shard(const fs::path& path);

void write_mean(const fs::path& shard_path, const MeanVector& mu);
MeanVector read_mean(const fs::path& shard_path);

struct PackOptions {
  std::string dataset_name = "textsynth";
  std::string encoder_id;
  std::string config_hash;
  json cost = json::object();
  std::string created_at;
  bool renormalized = false;
  std::size_t shard_rows = 100000;
};

/// Files are tracked as they are written; if finish() is never reached the
/// destructor removes them, so a failed pack leaves no manifest behind.
class DatasetWriter {
 public:
  DatasetWriter(fs::path out_dir, PackOptions options);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  /// Pairs captions with vectors by id; throws "unpaired id" naming the first offender.
  void write_pretrain(const std::vector<DiverseCaption>& captions, const EmbeddingBatch& reps);
  void write_instruct(const std::vector<InstructionSample>& samples, const EmbeddingBatch& reps);
  void write_mean(const std::string& name, const MeanVector& mu);

  json finish();

 private:
  struct Group {
    std::string kind;
    std::size_t count = 0;
    std::vector<json> files;
  };

  template <class Record>
  Group write_group(const std::string& kind, const std::string& text_prefix, const std::string& reps_prefix,
                    const std::string& ids_prefix, const std::vector<Record>& records, const EmbeddingBatch& reps);
  json file_entry(const std::string& rel, const std::string& role, std::size_t count);
  void note_batch(const EmbeddingBatch& reps);

  fs::path out_dir_;
  PackOptions options_;
  std::vector<fs::path> written_;
  std::optional<Group> pretrain_;
  std::optional<Group> instruct_;
  json means_ = json::array();
  std::optional<std::size_t> dim_;
  std::optional<bool> normalized_;
  bool finished_ = false;
};

json write_pretrain_dataset(const std::vector<DiverseCaption>& captions, const EmbeddingBatch& reps,
                            const fs::path& out_dir, const PackOptions& options);
json write_instruct_dataset(const std::vector<InstructionSample>& samples, const EmbeddingBatch& reps,
                            const fs::path& out_dir, const PackOptions& options);

struct FileCheck {
  std::string path;
  bool ok = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<FileCheck> files;
  bool ok() const;
  json to_json() const;
};

/// Re-reads every file the manifest references: existence, CRC-64, shard
/// structure and per-file counts against the manifest.
VerifyReport verify_dataset(const fs::path& out_dir);

}  // namespace textsynth
