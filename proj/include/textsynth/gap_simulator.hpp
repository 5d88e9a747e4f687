#pragma once

// Synthetic paired embeddings with a known modality gap: X_i = Y_i + c + eps_i,
// where Y lives in a seeded latent subspace and c is orthogonal to it.

#include <cstdint>
#include <vector>

#include "textsynth/io.hpp"
#include "textsynth/kernels.hpp"

namespace textsynth {

struct GapModelParams {
  std::size_t d = 64;
  std::size_t n = 2000;
  double gap_norm = 0.5;
  double sigma = 0.0;
  std::uint64_t rng_seed = 7;
  std::size_t latent_subspace_dim = 8;
  /// Unit-normalize Y, then X after the offset is added.
  bool normalize = false;

  void validate() const;
  json to_json() const;
  static GapModelParams from_json(const json& j);
};

/// Seeded orthonormal frame: the first latent_subspace_dim rows span the data,
/// c is a fixed combination of the remaining rows scaled to gap_norm.
struct GapGeometry {
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<double> basis;  // d x d, row-major, orthonormal rows
  std::vector<double> c;

  static GapGeometry build(const GapModelParams& params);
};

/// Noise vector eps_i (unit variance, scale by sigma) for row i.
std::vector<double> gap_noise(const GapModelParams& params, std::size_t i);

struct PairedEmbeddings {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> x;  // text side
  std::vector<double> y;  // image side
  std::vector<double> c;

  kernels::Rows<double> x_rows() const { return {x, n, d}; }
  kernels::Rows<double> y_rows() const { return {y, n, d}; }
};

PairedEmbeddings sample_paired_embeddings(const GapModelParams& params);

/// mean(X) - mean(Y).
std::vector<double> estimate_gap(kernels::Rows<double> x, kernels::Rows<double> y);

/// Fraction of queries whose best key is their own pair; exhaustive scan.
double retrieval_top1(kernels::Rows<double> queries, kernels::Rows<double> keys,
                      kernels::Metric metric = kernels::Metric::Cosine);

struct GapReport {
  GapModelParams params;
  double estimated_gap_error = 0.0;
  double raw_top1 = 0.0;
  double centered_top1 = 0.0;
  double raw_mean_cosine = 0.0;
  double centered_mean_cosine = 0.0;
  double residual_mean = 0.0;
  double residual_std = 0.0;
  double residual_max = 0.0;

  json to_json() const;
};

/// Retrieval queries are the image side, keys the text side.
GapReport run_gap_experiment(const GapModelParams& params);

}  // namespace textsynth
