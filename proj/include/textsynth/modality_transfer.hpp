#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "textsynth/embedding.hpp"
#include "textsynth/io.hpp"
#include "textsynth/kernels.hpp"

namespace textsynth {

struct MeanVector {
  std::vector<double> values;
  std::size_t sample_count = 0;
  Modality modality = Modality::Text;

  std::size_t dim() const { return values.size(); }
  void validate() const;
  json sidecar_json() const;
};

/// Streaming mean over batches; partial accumulators merge in call order.
class MeanAccumulator {
 public:
  MeanAccumulator() = default;

  void add(const EmbeddingBatch& batch);
  void merge(const MeanAccumulator& other);
  std::size_t count() const { return sum_.count; }

  /// Throws on an empty stream.
  MeanVector finish() const;

 private:
  bool started_ = false;
  std::size_t dim_ = 0;
  Modality modality_ = Modality::Text;
  kernels::CompensatedSum sum_;
};

MeanVector mean_vector(std::span<const EmbeddingBatch> batches);
MeanVector mean_vector(const EmbeddingBatch& batch);

/// Every row minus `mu`; optionally renormalized afterwards.
EmbeddingBatch center(const EmbeddingBatch& in, const MeanVector& mu, Modality out_modality,
                      bool renormalize = false);

/// Text -> SyntheticImage.
EmbeddingBatch synthesize_image_reps(const EmbeddingBatch& u, const MeanVector& mu, bool renormalize = false);

/// RealImage -> CenteredRealImage.
EmbeddingBatch transform_inference_reps(const EmbeddingBatch& v, const MeanVector& mu, bool renormalize = false);

/// Double-precision centering on its own mean, used by the simulator.
std::vector<double> center_rows(kernels::Rows<double> m);

}  // namespace textsynth
