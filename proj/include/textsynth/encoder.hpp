#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "textsynth/embedding.hpp"
#include "textsynth/gap_simulator.hpp"

namespace textsynth {

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  /// One vector per text, all of the same dimension. `ids` parallels `texts`.
  virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& ids,
                                                const std::vector<std::string>& texts) = 0;
  virtual std::string encoder_id() const = 0;
};

/// v_k = gaussian draw k of the counter stream keyed by (seed, fnv1a64(text)).
class MockTextEncoder : public TextEncoder {
 public:
  MockTextEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

  std::vector<float> encode(std::string_view text) const;
  std::vector<std::vector<float>> embed(const std::vector<std::string>& ids,
                                        const std::vector<std::string>& texts) override;
  std::string encoder_id() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

struct HttpEncoderOptions {
  std::string base_url;
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
};

/// POSTs {"model", "input": [...]} to <base>/embeddings. Accepts either
/// {"data": [{"embedding": [...]}, ...]} or {"embeddings": [[...], ...]}.
class HttpTextEncoder : public TextEncoder {
 public:
  explicit HttpTextEncoder(HttpEncoderOptions options);

  std::vector<std::vector<float>> embed(const std::vector<std::string>& ids,
                                        const std::vector<std::string>& texts) override;
  std::string encoder_id() const override { return "http:" + options_.model; }

  static std::vector<std::vector<float>> parse_response(const json& body);

 private:
  HttpEncoderOptions options_;
};

/// Vectors looked up by id from shard/ids file pairs written by the packer.
class PrecomputedEncoder : public TextEncoder {
 public:
  explicit PrecomputedEncoder(const fs::path& dir);

  std::vector<std::vector<float>> embed(const std::vector<std::string>& ids,
                                        const std::vector<std::string>& texts) override;
  std::string encoder_id() const override { return "precomputed:" + dir_.filename().string(); }

 private:
  fs::path dir_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

/// Encodes in batches of `batch_size`; fails with the index of the first
/// offending text on backend error or dimension drift.
EmbeddingBatch embed_texts(TextEncoder& encoder, const std::vector<std::string>& ids,
                           const std::vector<std::string>& texts, bool normalize = true,
                           std::size_t batch_size = 256);

struct PairedBatches {
  EmbeddingBatch text;
  EmbeddingBatch image;
};

/// Text vectors from the mock encoder and image = text - c - sigma * eps_i,
/// with c and eps from the gap model (gap.d fixes the dimension).
PairedBatches mock_paired_embed(const std::vector<std::string>& texts, const GapModelParams& gap,
                                std::uint64_t encoder_seed = 0);

}  // namespace textsynth
