#include <omp.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "textsynth/kernels.hpp"

namespace textsynth::kernels::parallel {
namespace {

template <class T>
std::vector<double> row_norms(Rows<T> m) {
  std::vector<double> norms(m.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.rows); ++i) {
    double s = 0.0;
    for (T x : m.row(i)) s += static_cast<double>(x) * static_cast<double>(x);
    norms[i] = std::sqrt(s);
  }
  return norms;
}

}  // namespace

template <class T>
CompensatedSum column_sums(Rows<T> m) {
  const std::size_t blocks = (m.rows + kReductionBlockRows - 1) / kReductionBlockRows;
  std::vector<CompensatedSum> partial(blocks, CompensatedSum(m.cols));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(blocks); ++b) {
    const std::size_t begin = b * kReductionBlockRows;
    const std::size_t end = std::min(m.rows, begin + kReductionBlockRows);
    for (std::size_t i = begin; i < end; ++i) partial[b].add_row(m.row(i));
  }
  CompensatedSum total(m.cols);
  for (const auto& p : partial) total.merge(p);
  return total;
}

template <class T>
void subtract_row(Rows<T> m, std::span<const double> v, std::span<T> out) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.rows); ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      out[i * m.cols + j] = static_cast<T>(static_cast<double>(m.data[i * m.cols + j]) - v[j]);
    }
  }
}

template <class T>
double retrieval_top1(Rows<T> queries, Rows<T> keys, Metric metric) {
  const std::vector<double> key_norms = row_norms(keys);
  const std::vector<double> query_norms = row_norms(queries);
  std::int64_t hits = 0;
#pragma omp parallel for schedule(static) reduction(+ : hits)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(queries.rows); ++i) {
    const auto q = queries.row(i);
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < keys.rows; ++k) {
      const auto key = keys.row(k);
      double score;
      if (metric == Metric::Cosine) {
        double dot = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) dot += static_cast<double>(q[j]) * static_cast<double>(key[j]);
        score = (query_norms[i] == 0.0 || key_norms[k] == 0.0) ? 0.0 : dot / (query_norms[i] * key_norms[k]);
      } else {
        double d2 = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
          const double diff = static_cast<double>(q[j]) - static_cast<double>(key[j]);
          d2 += diff * diff;
        }
        score = -d2;
      }
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    if (best == static_cast<std::size_t>(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.rows);
}

template <class T>
double mean_paired_cosine(Rows<T> a, Rows<T> b) {
  std::vector<double> cos(a.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(a.rows); ++i) cos[i] = cosine(a.row(i), b.row(i));
  const Rows<double> column{cos, a.rows, 1};
  return column_sums(column).mean()[0];
}

#define TEXTSYNTH_INSTANTIATE(T)                                                \
  template CompensatedSum column_sums<T>(Rows<T>);                              \
  template void subtract_row<T>(Rows<T>, std::span<const double>, std::span<T>); \
  template double retrieval_top1<T>(Rows<T>, Rows<T>, Metric);                  \
  template double mean_paired_cosine<T>(Rows<T>, Rows<T>);

TEXTSYNTH_INSTANTIATE(float)
TEXTSYNTH_INSTANTIATE(double)

#undef TEXTSYNTH_INSTANTIATE

}  // namespace textsynth::kernels::parallel
