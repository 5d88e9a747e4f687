#include <omp.h>

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "textsynth/kernels.hpp"

namespace textsynth::kernels {
namespace {

std::vector<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double offset = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(offset, 1.0);
  std::vector<double> m(rows * cols);
  for (auto& x : m) x = g(rng);
  return m;
}

// Restores the OpenMP thread count when a test changes it.
class ThreadCount {
 public:
  ThreadCount() : saved_(omp_get_max_threads()) {}
  ~ThreadCount() { omp_set_num_threads(saved_); }

 private:
  int saved_;
};

TEST(CompensatedSum, RecoversSmallAddendsLostByNaiveSummation) {
  CompensatedSum s(1);
  const std::vector<double> big = {1e16}, one = {1.0}, neg = {-1e16};
  s.add_row(std::span<const double>(big));
  for (int i = 0; i < 100; ++i) s.add_row(std::span<const double>(one));
  s.add_row(std::span<const double>(neg));
  EXPECT_EQ(s.mean()[0] * static_cast<double>(s.count), 100.0);
}

TEST(Kernels, ColumnSumsSerialAndParallelAgree) {
  const std::size_t rows = 5000, cols = 17;
  const auto m = random_matrix(rows, cols, 1, 3.0);
  const Rows<double> r{m, rows, cols};
  const auto a = serial::column_sums(r);
  const auto b = parallel::column_sums(r);
  ASSERT_EQ(a.count, b.count);
  const auto ma = a.mean(), mb = b.mean();
  for (std::size_t j = 0; j < cols; ++j) EXPECT_NEAR(ma[j], mb[j], 1e-14 * (1.0 + std::abs(ma[j])));
}

TEST(Kernels, ParallelResultsIndependentOfThreadCount) {
  ThreadCount guard;
  const std::size_t rows = 4100, cols = 9;
  const auto m = random_matrix(rows, cols, 2);
  const auto q = random_matrix(300, cols, 3);
  const Rows<double> r{m, rows, cols};
  const Rows<double> qr{q, 300, cols};
  const Rows<double> kr{std::span<const double>(m).subspan(0, 300 * cols), 300, cols};

  omp_set_num_threads(1);
  const auto ref_mean = parallel::column_sums(r).mean();
  const double ref_top1 = parallel::retrieval_top1(qr, kr, Metric::Cosine);
  const double ref_cos = parallel::mean_paired_cosine(qr, kr);
  for (int threads : {2, 3, 4, 8}) {
    omp_set_num_threads(threads);
    EXPECT_EQ(parallel::column_sums(r).mean(), ref_mean) << threads;
    EXPECT_EQ(parallel::retrieval_top1(qr, kr, Metric::Cosine), ref_top1) << threads;
    EXPECT_EQ(parallel::mean_paired_cosine(qr, kr), ref_cos) << threads;
  }
}

TEST(Kernels, RetrievalMatchesSerialBothMetrics) {
  const std::size_t n = 400, d = 12;
  const auto x = random_matrix(n, d, 4);
  auto y = x;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.8);
  for (auto& v : y) v += noise(rng);
  const Rows<double> xr{x, n, d}, yr{y, n, d};
  for (Metric metric : {Metric::Cosine, Metric::Euclidean}) {
    const double s = serial::retrieval_top1(yr, xr, metric);
    const double p = parallel::retrieval_top1(yr, xr, metric);
    EXPECT_EQ(s, p);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Kernels, IdenticalQueriesAndKeysRetrievePerfectly) {
  const std::size_t n = 100, d = 8;
  const auto x = random_matrix(n, d, 6);
  const Rows<double> r{x, n, d};
  EXPECT_EQ(parallel::retrieval_top1(r, r, Metric::Cosine), 1.0);
  EXPECT_EQ(parallel::retrieval_top1(r, r, Metric::Euclidean), 1.0);
}

TEST(Kernels, TiesGoToLowestIndex) {
  // Every key is identical: query i wins only if i == 0.
  const std::vector<double> keys(4 * 2, 1.0);
  const std::vector<double> queries(4 * 2, 1.0);
  const Rows<double> k{keys, 4, 2}, q{queries, 4, 2};
  EXPECT_EQ(serial::retrieval_top1(q, k, Metric::Cosine), 0.25);
  EXPECT_EQ(parallel::retrieval_top1(q, k, Metric::Cosine), 0.25);
}

TEST(Kernels, SubtractRowAgrees) {
  const std::size_t n = 700, d = 5;
  const auto x = random_matrix(n, d, 7);
  const std::vector<double> v = {0.5, -1.0, 2.0, 0.0, 3.25};
  std::vector<double> a(n * d), b(n * d);
  serial::subtract_row(Rows<double>{x, n, d}, std::span<const double>(v), std::span<double>(a));
  parallel::subtract_row(Rows<double>{x, n, d}, std::span<const double>(v), std::span<double>(b));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[d + 2], x[d + 2] - 2.0);
}

TEST(Kernels, FloatRowsSupported) {
  const std::vector<float> a = {1, 0, 0, 1}, b = {1, 0, 0, 2};
  const Rows<float> ar{a, 2, 2}, br{b, 2, 2};
  EXPECT_DOUBLE_EQ(parallel::mean_paired_cosine(ar, br), 1.0);
  EXPECT_DOUBLE_EQ(serial::mean_paired_cosine(ar, br), 1.0);
}

TEST(Cosine, ZeroNormIsZero) {
  const std::vector<double> z = {0, 0}, v = {1, 1};
  EXPECT_EQ(cosine<double>(z, v), 0.0);
  EXPECT_NEAR(cosine<double>(v, v), 1.0, 1e-15);
}

}  // namespace
}  // namespace textsynth::kernels
