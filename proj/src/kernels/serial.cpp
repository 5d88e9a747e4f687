#include <cmath>
#include <limits>

#include "textsynth/kernels.hpp"

namespace textsynth::kernels {

template <class T>
void CompensatedSum::add_row(std::span<const T> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    const double x = static_cast<double>(row[j]);
    const double t = sum[j] + x;
    if (std::abs(sum[j]) >= std::abs(x)) {
      comp[j] += (sum[j] - t) + x;
    } else {
      comp[j] += (x - t) + sum[j];
    }
    sum[j] = t;
  }
  ++count;
}

void CompensatedSum::merge(const CompensatedSum& other) {
  for (std::size_t j = 0; j < sum.size(); ++j) {
    const double x = other.sum[j];
    const double t = sum[j] + x;
    if (std::abs(sum[j]) >= std::abs(x)) {
      comp[j] += (sum[j] - t) + x;
    } else {
      comp[j] += (x - t) + sum[j];
    }
    sum[j] = t;
    comp[j] += other.comp[j];
  }
  count += other.count;
}

std::vector<double> CompensatedSum::mean() const {
  std::vector<double> m(sum.size());
  for (std::size_t j = 0; j < sum.size(); ++j) m[j] = (sum[j] + comp[j]) / static_cast<double>(count);
  return m;
}

template <class T>
double cosine(std::span<const T> a, std::span<const T> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += static_cast<double>(a[j]) * static_cast<double>(b[j]);
    na += static_cast<double>(a[j]) * static_cast<double>(a[j]);
    nb += static_cast<double>(b[j]) * static_cast<double>(b[j]);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace serial {

template <class T>
CompensatedSum column_sums(Rows<T> m) {
  CompensatedSum acc(m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) acc.add_row(m.row(i));
  return acc;
}

template <class T>
void subtract_row(Rows<T> m, std::span<const double> v, std::span<T> out) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      out[i * m.cols + j] = static_cast<T>(static_cast<double>(m.data[i * m.cols + j]) - v[j]);
    }
  }
}

template <class T>
double retrieval_top1(Rows<T> queries, Rows<T> keys, Metric metric) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < queries.rows; ++i) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < keys.rows; ++k) {
      double score;
      if (metric == Metric::Cosine) {
        score = cosine(queries.row(i), keys.row(k));
      } else {
        double d2 = 0.0;
        for (std::size_t j = 0; j < queries.cols; ++j) {
          const double diff = static_cast<double>(queries.row(i)[j]) - static_cast<double>(keys.row(k)[j]);
          d2 += diff * diff;
        }
        score = -d2;
      }
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.rows);
}

template <class T>
double mean_paired_cosine(Rows<T> a, Rows<T> b) {
  CompensatedSum acc(1);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double c = cosine(a.row(i), b.row(i));
    acc.add_row(std::span<const double>(&c, 1));
  }
  return acc.mean()[0];
}

}  // namespace serial

#define TEXTSYNTH_INSTANTIATE(T)                                                     \
  template void CompensatedSum::add_row<T>(std::span<const T>);                     \
  template double cosine<T>(std::span<const T>, std::span<const T>);                \
  template CompensatedSum serial::column_sums<T>(Rows<T>);                           \
  template void serial::subtract_row<T>(Rows<T>, std::span<const double>, std::span<T>); \
  template double serial::retrieval_top1<T>(Rows<T>, Rows<T>, Metric);               \
  template double serial::mean_paired_cosine<T>(Rows<T>, Rows<T>);

TEXTSYNTH_INSTANTIATE(float)
TEXTSYNTH_INSTANTIATE(double)

#undef TEXTSYNTH_INSTANTIATE

}  // namespace textsynth::kernels
