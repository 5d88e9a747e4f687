#pragma once

// Pipeline configuration: one JSON file, strictly validated. Errors name the
// offending location as a JSON pointer, e.g. "/stage2/mix/multiple_choice".

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "textsynth/caption_forge.hpp"
#include "textsynth/gap_simulator.hpp"
#include "textsynth/instruction_forge.hpp"
#include "textsynth/io.hpp"
#include "textsynth/llm_gateway.hpp"
#include "textsynth/quality_metrics.hpp"
#include "textsynth/seed_corpus.hpp"

namespace textsynth {

struct SeedsConfig {
  std::vector<fs::path> inputs;
  FilterPolicy policy;
  std::optional<fs::path> templates;
  std::optional<fs::path> labels;
  std::size_t per_label_count = 10;
};

struct GatewayConfig {
  std::string backend = "mock";  // mock | http
  std::string base_url;
  std::string model = "mock";
  std::string api_key_env = "TEXTSYNTH_API_KEY";
  Prices prices;
  std::size_t parallelism = 8;
  RetryPolicy retry;
  Millis timeout{60000};
};

struct EncoderConfig {
  std::string backend = "mock";  // mock | http | precomputed
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  bool normalize = true;
  std::string base_url;
  std::string model;
  std::optional<fs::path> dir;
  std::size_t batch_size = 256;
};

struct TransferConfig {
  std::string mean_source = "corpus";  // corpus | file
  std::optional<fs::path> mean_file;
  bool renormalize = false;
  /// Optional real image vectors (shard + ids file) to center for inference.
  std::optional<fs::path> real_shard;
  std::optional<fs::path> real_ids;
};

struct PackConfig {
  fs::path out_dir = "dataset";
  std::string dataset_name = "textsynth";
  std::size_t shard_rows = 100000;
};

struct MetricsConfig {
  TtrMode ttr_mode = TtrMode::PerSampleMean;
  EntropyUnit entropy_unit = EntropyUnit::Nats;
  std::optional<fs::path> reference;
};

struct PipelineConfig {
  fs::path work_dir = "work";
  std::uint64_t rng_seed = 0;
  std::optional<std::string> created_at;
  SeedsConfig seeds;
  Stage1Options stage1;
  Stage2Options stage2;
  GatewayConfig gateway;
  EncoderConfig encoder;
  TransferConfig transfer;
  PackConfig pack;
  MetricsConfig metrics;
  GapModelParams simulate;

  /// The validated document with defaults filled in and paths resolved.
  json resolved;

  /// Hex CRC-64 of the canonical resolved config. Parallelism, chunking,
  /// output locations and credentials are left out; input files contribute
  /// their content checksum instead of their path.
  std::string content_hash() const;
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  bool no_network = false;
};

/// Relative paths resolve against the config file's directory.
PipelineConfig load_config(const fs::path& path, const ConfigOverrides& overrides = {});
PipelineConfig parse_config(const json& doc, const fs::path& base_dir, const ConfigOverrides& overrides = {});

/// NO_NETWORK=1 in the environment.
bool no_network_env();

}  // namespace textsynth
