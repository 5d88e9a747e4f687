// Serial reference vs OpenMP kernels on simulator-sized inputs.

#include <benchmark/benchmark.h>

#include <map>

#include "textsynth/gap_simulator.hpp"
#include "textsynth/kernels.hpp"

namespace {

using namespace textsynth;

const PairedEmbeddings& data(std::size_t n) {
  static std::map<std::size_t, PairedEmbeddings> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    GapModelParams p;
    p.n = n;
    p.sigma = 0.05;
    it = cache.emplace(n, sample_paired_embeddings(p)).first;
  }
  return it->second;
}

void BM_ColumnSumsSerial(benchmark::State& state) {
  const auto& d = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::column_sums(d.x_rows()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ColumnSumsParallel(benchmark::State& state) {
  const auto& d = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::parallel::column_sums(d.x_rows()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RetrievalSerial(benchmark::State& state) {
  const auto& d = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::retrieval_top1(d.y_rows(), d.x_rows(), kernels::Metric::Cosine));
}

void BM_RetrievalParallel(benchmark::State& state) {
  const auto& d = data(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::parallel::retrieval_top1(d.y_rows(), d.x_rows(), kernels::Metric::Cosine));
}

}  // namespace

BENCHMARK(BM_ColumnSumsSerial)->Arg(10000)->Arg(100000);
BENCHMARK(BM_ColumnSumsParallel)->Arg(10000)->Arg(100000);
BENCHMARK(BM_RetrievalSerial)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RetrievalParallel)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
