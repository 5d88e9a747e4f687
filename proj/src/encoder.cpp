#include "textsynth/encoder.hpp"

#include <httplib.h>

#include "textsynth/dataset_packer.hpp"
#include "textsynth/error.hpp"
#include "textsynth/hash.hpp"
#include "textsynth/llm_gateway.hpp"
#include "textsynth/philox.hpp"

namespace textsynth {

std::vector<float> MockTextEncoder::encode(std::string_view text) const {
  const CounterStream s(seed_, fnv1a64(text));
  std::vector<float> v(dim_);
  for (std::size_t k = 0; k < dim_; ++k) v[k] = static_cast<float>(s.gaussian(k));
  return v;
}

std::vector<std::vector<float>> MockTextEncoder::embed(const std::vector<std::string>&,
                                                       const std::vector<std::string>& texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(encode(t));
  return out;
}

std::string MockTextEncoder::encoder_id() const {
  return "mock:d=" + std::to_string(dim_) + ",seed=" + std::to_string(seed_);
}

HttpTextEncoder::HttpTextEncoder(HttpEncoderOptions options) : options_(std::move(options)) {
  split_base_url(options_.base_url);
}

std::vector<std::vector<float>> HttpTextEncoder::parse_response(const json& body) {
  std::vector<std::vector<float>> out;
  if (body.contains("data")) {
    for (const auto& item : body.at("data")) out.push_back(item.at("embedding").get<std::vector<float>>());
  } else if (body.contains("embeddings")) {
    for (const auto& item : body.at("embeddings")) out.push_back(item.get<std::vector<float>>());
  } else {
    throw Error("embeddings response has neither \"data\" nor \"embeddings\"");
  }
  return out;
}

std::vector<std::vector<float>> HttpTextEncoder::embed(const std::vector<std::string>&,
                                                       const std::vector<std::string>& texts) {
  const auto [origin, prefix] = split_base_url(options_.base_url);
  httplib::Client client(origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  client.set_connection_timeout(seconds.count(), 0);
  client.set_read_timeout(seconds.count(), 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  const json req = {{"model", options_.model}, {"input", texts}};
  const auto res = client.Post(prefix + "/embeddings", headers, req.dump(), "application/json");
  if (!res) throw Error("embeddings request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw Error("embeddings request returned HTTP " + std::to_string(res->status));
  auto out = parse_response(json::parse(res->body));
  if (out.size() != texts.size()) {
    throw Error("embeddings response has " + std::to_string(out.size()) + " vectors for " +
                std::to_string(texts.size()) + " inputs");
  }
  return out;
}

PrecomputedEncoder::PrecomputedEncoder(const fs::path& dir) : dir_(dir) {
  require_file(dir, "precomputed embeddings directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".unic" || !name.starts_with("reps-")) continue;
    const auto ids_path = dir / ("ids-" + name.substr(5, name.size() - 10) + ".txt");
    const Shard shard = read_shard(entry.path());
    const auto ids = read_lines(ids_path);
    if (ids.size() != shard.header.count) throw ValidationError(ids_path.string() + ": id count does not match shard");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto row = shard.row(i);
      vectors_[ids[i]] = std::vector<float>(row.begin(), row.end());
    }
  }
}

std::vector<std::vector<float>> PrecomputedEncoder::embed(const std::vector<std::string>& ids,
                                                          const std::vector<std::string>&) {
  std::vector<std::vector<float>> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = vectors_.find(id);
    if (it == vectors_.end()) throw Error("no precomputed vector for id " + id);
    out.push_back(it->second);
  }
  return out;
}

EmbeddingBatch embed_texts(TextEncoder& encoder, const std::vector<std::string>& ids,
                           const std::vector<std::string>& texts, bool normalize, std::size_t batch_size) {
  if (ids.size() != texts.size()) throw ValidationError("embed: ids and texts differ in length");
  if (batch_size == 0) batch_size = 1;
  EmbeddingBatch out;
  bool have_dim = false;
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const std::size_t end = std::min(texts.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      if (texts[i].empty()) throw ValidationError("embed: text " + std::to_string(i) + " is empty");
    }
    std::vector<std::string> id_chunk(ids.begin() + start, ids.begin() + end);
    std::vector<std::string> chunk(texts.begin() + start, texts.begin() + end);
    std::vector<std::vector<float>> vecs;
    try {
      vecs = encoder.embed(id_chunk, chunk);
    } catch (const std::exception& e) {
      throw Error("embed: batch starting at index " + std::to_string(start) + ": " + e.what());
    }
    if (vecs.size() != chunk.size()) {
      throw Error("embed: batch starting at index " + std::to_string(start) + ": got " +
                  std::to_string(vecs.size()) + " vectors for " + std::to_string(chunk.size()) + " texts");
    }
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      if (!have_dim) {
        if (vecs[i].empty()) throw ValidationError("embed: index " + std::to_string(start + i) + ": empty vector");
        out = EmbeddingBatch(vecs[i].size(), Modality::Text, false);
        have_dim = true;
      }
      if (vecs[i].size() != out.dim()) {
        throw ValidationError("embed: index " + std::to_string(start + i) + ": dimension " +
                              std::to_string(vecs[i].size()) + " drifts from " + std::to_string(out.dim()));
      }
      out.push_back(ids[start + i], vecs[i]);
    }
  }
  if (normalize) normalize_rows(out);
  out.validate();
  return out;
}

PairedBatches mock_paired_embed(const std::vector<std::string>& texts, const GapModelParams& gap,
                                std::uint64_t encoder_seed) {
  gap.validate();
  const GapGeometry g = GapGeometry::build(gap);
  PairedBatches out{EmbeddingBatch(gap.d, Modality::Text, false), EmbeddingBatch(gap.d, Modality::RealImage, false)};
  MockTextEncoder enc(gap.d, encoder_seed);
  std::vector<float> img(gap.d);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto v = enc.encode(texts[i]);
    const auto eps = gap_noise(gap, i);
    for (std::size_t j = 0; j < gap.d; ++j) {
      img[j] = static_cast<float>(static_cast<double>(v[j]) - g.c[j] - gap.sigma * eps[j]);
    }
    const std::string id = std::to_string(i);
    out.text.push_back(id, v);
    out.image.push_back(id, img);
  }
  return out;
}

}  // namespace textsynth
