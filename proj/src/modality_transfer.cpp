#include "textsynth/modality_transfer.hpp"

#include <cmath>
#include <string>

#include "textsynth/error.hpp"

namespace textsynth {

void MeanVector::validate() const {
  if (sample_count < 1) throw ValidationError("mean vector: sample_count must be at least 1");
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("mean vector: non-finite entry");
  }
}

json MeanVector::sidecar_json() const {
  return {{"dim", values.size()}, {"count", sample_count}, {"modality", std::string(to_string(modality))}};
}

void MeanAccumulator::add(const EmbeddingBatch& batch) {
  if (!started_) {
    started_ = true;
    dim_ = batch.dim();
    modality_ = batch.modality();
    sum_ = kernels::CompensatedSum(dim_);
  }
  if (batch.dim() != dim_) {
    throw ValidationError("mean: dimension " + std::to_string(batch.dim()) + " does not match " +
                          std::to_string(dim_));
  }
  if (batch.modality() != modality_) {
    throw ValidationError("mean: mixed modalities " + std::string(to_string(modality_)) + " and " +
                          std::string(to_string(batch.modality())));
  }
  if (batch.empty()) return;
  sum_.merge(kernels::parallel::column_sums(kernels::Rows<float>{batch.data(), batch.size(), dim_}));
}

void MeanAccumulator::merge(const MeanAccumulator& other) {
  if (!other.started_) return;
  if (!started_) {
    *this = other;
    return;
  }
  if (other.dim_ != dim_) throw ValidationError("mean: dimension mismatch on merge");
  if (other.modality_ != modality_) throw ValidationError("mean: mixed modalities on merge");
  sum_.merge(other.sum_);
}

MeanVector MeanAccumulator::finish() const {
  if (sum_.count == 0) throw ValidationError("mean: empty input");
  MeanVector mu{sum_.mean(), sum_.count, modality_};
  mu.validate();
  return mu;
}

MeanVector mean_vector(std::span<const EmbeddingBatch> batches) {
  MeanAccumulator acc;
  for (const auto& b : batches) acc.add(b);
  return acc.finish();
}

MeanVector mean_vector(const EmbeddingBatch& batch) { return mean_vector(std::span<const EmbeddingBatch>(&batch, 1)); }

EmbeddingBatch center(const EmbeddingBatch& in, const MeanVector& mu, Modality out_modality, bool renormalize) {
  if (mu.dim() != in.dim()) {
    throw ValidationError("center: mean has dimension " + std::to_string(mu.dim()) + ", vectors have " +
                          std::to_string(in.dim()));
  }
  EmbeddingBatch out(in.dim(), out_modality, false);
  out.ids() = in.ids();
  out.data().resize(in.data().size());
  kernels::parallel::subtract_row(kernels::Rows<float>{in.data(), in.size(), in.dim()}, mu.values,
                                  std::span<float>(out.data()));
  if (renormalize) normalize_rows(out);
  return out;
}

namespace {

void require_modality(const EmbeddingBatch& in, const MeanVector& mu, Modality expected) {
  if (in.modality() != expected) {
    throw ValidationError("expected " + std::string(to_string(expected)) + " vectors, got " +
                          std::string(to_string(in.modality())));
  }
  if (mu.modality != expected) {
    throw ValidationError("expected a " + std::string(to_string(expected)) + " mean, got " +
                          std::string(to_string(mu.modality)));
  }
}

}  // namespace

EmbeddingBatch synthesize_image_reps(const EmbeddingBatch& u, const MeanVector& mu, bool renormalize) {
  require_modality(u, mu, Modality::Text);
  return center(u, mu, Modality::SyntheticImage, renormalize);
}

EmbeddingBatch transform_inference_reps(const EmbeddingBatch& v, const MeanVector& mu, bool renormalize) {
  require_modality(v, mu, Modality::RealImage);
  return center(v, mu, Modality::CenteredRealImage, renormalize);
}

std::vector<double> center_rows(kernels::Rows<double> m) {
  if (m.rows == 0) throw ValidationError("center: empty input");
  const auto mu = kernels::parallel::column_sums(m).mean();
  std::vector<double> out(m.data.size());
  kernels::parallel::subtract_row(m, mu, std::span<double>(out));
  return out;
}

}  // namespace textsynth
