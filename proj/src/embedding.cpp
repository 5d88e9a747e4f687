#include "textsynth/embedding.hpp"

#include <cmath>

#include "textsynth/error.hpp"

namespace textsynth {
namespace {

constexpr std::string_view kModalityNames[] = {"text", "synthetic_image", "real_image", "centered_real_image"};

}  // namespace

std::string_view to_string(Modality m) { return kModalityNames[static_cast<std::size_t>(m)]; }

std::optional<Modality> parse_modality(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kModalityNames); ++i) {
    if (kModalityNames[i] == name) return static_cast<Modality>(i);
  }
  return std::nullopt;
}

std::optional<Modality> modality_from_code(std::uint8_t code) {
  if (code >= std::size(kModalityNames)) return std::nullopt;
  return static_cast<Modality>(code);
}

void EmbeddingBatch::push_back(std::string id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw ValidationError("embedding " + id + ": dimension " + std::to_string(values.size()) + ", expected " +
                          std::to_string(dim_));
  }
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), values.begin(), values.end());
}

EmbeddingVector EmbeddingBatch::at(std::size_t i) const {
  const auto r = row(i);
  return {ids_.at(i), std::vector<float>(r.begin(), r.end()), modality_, normalized_};
}

void EmbeddingBatch::validate() const {
  if (data_.size() != ids_.size() * dim_) throw ValidationError("embedding batch: data size does not match ids");
  for (std::size_t i = 0; i < size(); ++i) {
    double norm2 = 0.0;
    for (float x : row(i)) {
      if (!std::isfinite(x)) throw ValidationError("embedding " + ids_[i] + ": non-finite entry");
      norm2 += static_cast<double>(x) * x;
    }
    if (normalized_ && std::abs(std::sqrt(norm2) - 1.0) > 1e-6) {
      throw ValidationError("embedding " + ids_[i] + ": marked normalized but norm is " +
                            std::to_string(std::sqrt(norm2)));
    }
  }
}

void normalize_rows(EmbeddingBatch& batch) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto r = batch.row(i);
    double norm2 = 0.0;
    for (float x : r) norm2 += static_cast<double>(x) * x;
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    for (float& x : r) x = static_cast<float>(x * inv);
  }
  batch.set_normalized(true);
}

}  // namespace textsynth
