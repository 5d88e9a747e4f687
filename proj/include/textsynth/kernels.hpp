#pragma once

// Row-matrix kernels. `serial` is the reference; `parallel` runs the same
// math under OpenMP and is what the pipeline calls. Reductions in `parallel`
// use fixed row blocks merged in block order, so results do not depend on
// the thread count.

#include <cstddef>
#include <span>
#include <vector>

namespace textsynth::kernels {

template <class T>
struct Rows {
  std::span<const T> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const T> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

enum class Metric { Cosine, Euclidean };

/// Neumaier-compensated per-column sums.
struct CompensatedSum {
  std::vector<double> sum;
  std::vector<double> comp;
  std::size_t count = 0;

  explicit CompensatedSum(std::size_t cols = 0) : sum(cols, 0.0), comp(cols, 0.0) {}

  template <class T>
  void add_row(std::span<const T> row);
  void merge(const CompensatedSum& other);
  std::vector<double> mean() const;
};

inline constexpr std::size_t kReductionBlockRows = 1024;

namespace serial {

template <class T>
CompensatedSum column_sums(Rows<T> m);

template <class T>
void subtract_row(Rows<T> m, std::span<const double> v, std::span<T> out);

template <class T>
double retrieval_top1(Rows<T> queries, Rows<T> keys, Metric metric);

template <class T>
double mean_paired_cosine(Rows<T> a, Rows<T> b);

}  // namespace serial

namespace parallel {

template <class T>
CompensatedSum column_sums(Rows<T> m);

template <class T>
void subtract_row(Rows<T> m, std::span<const double> v, std::span<T> out);

template <class T>
double retrieval_top1(Rows<T> queries, Rows<T> keys, Metric metric);

template <class T>
double mean_paired_cosine(Rows<T> a, Rows<T> b);

}  // namespace parallel

/// Cosine of two rows; 0 if either has zero norm.
template <class T>
double cosine(std::span<const T> a, std::span<const T> b);

}  // namespace textsynth::kernels
