#include "textsynth/gap_simulator.hpp"

#include <cmath>
#include <string>

#include "textsynth/error.hpp"
#include "textsynth/modality_transfer.hpp"
#include "textsynth/philox.hpp"

namespace textsynth {
namespace {

constexpr std::uint16_t kRotationTag = 0x6A00;
constexpr std::uint16_t kLatentTag = 0x6A01;
constexpr std::uint16_t kNoiseTag = 0x6A02;
constexpr std::uint16_t kOffsetTag = 0x6A03;

void normalize(std::span<double> v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (n2 == 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
}

}  // namespace

void GapModelParams::validate() const {
  if (d < 2) throw ConfigError("gap model: d must be at least 2");
  if (latent_subspace_dim < 1 || latent_subspace_dim > d - 1) {
    throw ConfigError("gap model: latent_subspace_dim must be in [1, d-1]");
  }
  if (!std::isfinite(gap_norm) || gap_norm < 0.0) throw ConfigError("gap model: gap_norm must be finite and >= 0");
  if (!std::isfinite(sigma) || sigma < 0.0) throw ConfigError("gap model: sigma must be finite and >= 0");
}

json GapModelParams::to_json() const {
  return {{"d", d},
          {"n", n},
          {"gap_norm", gap_norm},
          {"sigma", sigma},
          {"rng_seed", rng_seed},
          {"latent_subspace_dim", latent_subspace_dim},
          {"normalize", normalize}};
}

GapModelParams GapModelParams::from_json(const json& j) {
  GapModelParams p;
  p.d = j.value("d", p.d);
  p.n = j.value("n", p.n);
  p.gap_norm = j.value("gap_norm", p.gap_norm);
  p.sigma = j.value("sigma", p.sigma);
  p.rng_seed = j.value("rng_seed", p.rng_seed);
  p.latent_subspace_dim = j.value("latent_subspace_dim", p.latent_subspace_dim);
  p.normalize = j.value("normalize", p.normalize);
  return p;
}

GapGeometry GapGeometry::build(const GapModelParams& params) {
  params.validate();
  const std::size_t d = params.d;
  GapGeometry g;
  g.d = d;
  g.k = params.latent_subspace_dim;
  g.basis.resize(d * d);
  const CounterStream rot(params.rng_seed, stream_id(kRotationTag, 0));
  for (std::size_t i = 0; i < d * d; ++i) g.basis[i] = rot.gaussian(i);

  // Modified Gram-Schmidt over the rows.
  for (std::size_t r = 0; r < d; ++r) {
    std::span<double> row(g.basis.data() + r * d, d);
    for (std::size_t p = 0; p < r; ++p) {
      std::span<const double> prev(g.basis.data() + p * d, d);
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += row[j] * prev[j];
      for (std::size_t j = 0; j < d; ++j) row[j] -= dot * prev[j];
    }
    normalize(row);
  }

  g.c.assign(d, 0.0);
  if (params.gap_norm > 0.0) {
    const CounterStream off(params.rng_seed, stream_id(kOffsetTag, 0));
    for (std::size_t t = g.k; t < d; ++t) {
      const double w = off.gaussian(t - g.k);
      for (std::size_t j = 0; j < d; ++j) g.c[j] += w * g.basis[t * d + j];
    }
    normalize(g.c);
    for (double& x : g.c) x *= params.gap_norm;
  }
  return g;
}

std::vector<double> gap_noise(const GapModelParams& params, std::size_t i) {
  const CounterStream s(params.rng_seed, stream_id(kNoiseTag, i));
  std::vector<double> eps(params.d);
  for (std::size_t j = 0; j < params.d; ++j) eps[j] = s.gaussian(j);
  return eps;
}

PairedEmbeddings sample_paired_embeddings(const GapModelParams& params) {
  const GapGeometry g = GapGeometry::build(params);
  const std::size_t d = params.d;
  const std::size_t n = params.n;
  PairedEmbeddings out;
  out.n = n;
  out.d = d;
  out.c = g.c;
  out.x.assign(n * d, 0.0);
  out.y.assign(n * d, 0.0);
  const double latent_scale = 1.0 / std::sqrt(static_cast<double>(g.k));

#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::span<double> y(out.y.data() + i * d, d);
    std::span<double> x(out.x.data() + i * d, d);
    const CounterStream latent(params.rng_seed, stream_id(kLatentTag, i));
    for (std::size_t a = 0; a < g.k; ++a) {
      const double z = latent.gaussian(a) * latent_scale;
      for (std::size_t j = 0; j < d; ++j) y[j] += z * g.basis[a * d + j];
    }
    if (params.normalize) normalize(y);
    const auto eps = gap_noise(params, i);
    for (std::size_t j = 0; j < d; ++j) x[j] = y[j] + g.c[j] + params.sigma * eps[j];
    if (params.normalize) normalize(x);
  }
  return out;
}

std::vector<double> estimate_gap(kernels::Rows<double> x, kernels::Rows<double> y) {
  if (x.rows == 0) throw ValidationError("estimate_gap: no rows");
  if (x.rows != y.rows || x.cols != y.cols) throw ValidationError("estimate_gap: shape mismatch");
  const auto mx = kernels::parallel::column_sums(x).mean();
  const auto my = kernels::parallel::column_sums(y).mean();
  std::vector<double> c(mx.size());
  for (std::size_t j = 0; j < c.size(); ++j) c[j] = mx[j] - my[j];
  return c;
}

double retrieval_top1(kernels::Rows<double> queries, kernels::Rows<double> keys, kernels::Metric metric) {
  if (queries.rows == 0) throw ValidationError("retrieval: no rows");
  if (queries.rows != keys.rows || queries.cols != keys.cols) throw ValidationError("retrieval: shape mismatch");
  return kernels::parallel::retrieval_top1(queries, keys, metric);
}

json GapReport::to_json() const {
  return {{"params", params.to_json()},
          {"estimated_gap_error", estimated_gap_error},
          {"raw_top1", raw_top1},
          {"centered_top1", centered_top1},
          {"raw_mean_cosine", raw_mean_cosine},
          {"centered_mean_cosine", centered_mean_cosine},
          {"residual_norm_stats", {{"mean", residual_mean}, {"std", residual_std}, {"max", residual_max}}}};
}

GapReport run_gap_experiment(const GapModelParams& params) {
  if (params.n == 0) throw ConfigError("gap model: n must be positive");
  const PairedEmbeddings pe = sample_paired_embeddings(params);
  const std::size_t n = pe.n;
  const std::size_t d = pe.d;

  GapReport r;
  r.params = params;
  const auto c_hat = estimate_gap(pe.x_rows(), pe.y_rows());
  double err2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) err2 += (c_hat[j] - pe.c[j]) * (c_hat[j] - pe.c[j]);
  r.estimated_gap_error = std::sqrt(err2);

  r.raw_top1 = retrieval_top1(pe.y_rows(), pe.x_rows());
  r.raw_mean_cosine = kernels::parallel::mean_paired_cosine(pe.x_rows(), pe.y_rows());

  const auto xc = center_rows(pe.x_rows());
  const auto yc = center_rows(pe.y_rows());
  const kernels::Rows<double> xc_rows{xc, n, d};
  const kernels::Rows<double> yc_rows{yc, n, d};
  r.centered_top1 = retrieval_top1(yc_rows, xc_rows);
  r.centered_mean_cosine = kernels::parallel::mean_paired_cosine(xc_rows, yc_rows);

  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = xc[i * d + j] - yc[i * d + j];
      s += diff * diff;
    }
    residual[i] = std::sqrt(s);
  }
  const kernels::Rows<double> res_rows{residual, n, 1};
  r.residual_mean = kernels::parallel::column_sums(res_rows).mean()[0];
  kernels::CompensatedSum sq(1);
  for (double v : residual) {
    const double dv = (v - r.residual_mean) * (v - r.residual_mean);
    sq.add_row(std::span<const double>(&dv, 1));
    r.residual_max = std::max(r.residual_max, v);
  }
  r.residual_std = std::sqrt(sq.mean()[0]);
  return r;
}

}  // namespace textsynth
