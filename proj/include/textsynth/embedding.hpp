#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace textsynth {

enum class Modality : std::uint8_t {
  Text = 0,
  SyntheticImage = 1,
  RealImage = 2,
  CenteredRealImage = 3,
};

std::string_view to_string(Modality m);
std::optional<Modality> parse_modality(std::string_view name);
std::optional<Modality> modality_from_code(std::uint8_t code);

struct EmbeddingVector {
  std::string id;
  std::vector<float> values;
  Modality modality = Modality::Text;
  bool normalized = false;
};

/// Row-major block of same-dimension, same-modality vectors with their ids.
class EmbeddingBatch {
 public:
  EmbeddingBatch() = default;
  EmbeddingBatch(std::size_t dim, Modality modality, bool normalized)
      : dim_(dim), modality_(modality), normalized_(normalized) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  Modality modality() const { return modality_; }
  bool normalized() const { return normalized_; }

  void set_modality(Modality m) { modality_ = m; }
  void set_normalized(bool n) { normalized_ = n; }

  void push_back(std::string id, std::span<const float> values);

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::vector<std::string>& ids() { return ids_; }
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  EmbeddingVector at(std::size_t i) const;

  /// Finite entries; unit L2 norm within 1e-6 when normalized.
  void validate() const;

 private:
  std::size_t dim_ = 0;
  Modality modality_ = Modality::Text;
  bool normalized_ = false;
  std::vector<std::string> ids_;
  std::vector<float> data_;
};

/// Scales every row to unit L2 norm (zero rows are left as is).
void normalize_rows(EmbeddingBatch& batch);

}  // namespace textsynth
