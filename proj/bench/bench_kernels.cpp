// Serial reference vs OpenMP kernels on stacks of flattened client updates.

#include "horus/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

struct Stack {
  horus::Matrix values;
  horus::Matrix masks;
  horus::Vector weights;
  horus::Vector fallback;
};

Stack make_stack(Eigen::Index entries, Eigen::Index clients) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution cover(0.8);
  Stack s{horus::Matrix(entries, clients), horus::Matrix(entries, clients), horus::Vector(clients),
          horus::Vector::Zero(entries)};
  for (Eigen::Index i = 0; i < s.values.size(); ++i) {
    s.values.data()[i] = normal(rng);
    s.masks.data()[i] = cover(rng) ? 1.0 : 0.0;
  }
  for (auto& w : s.weights) w = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return s;
}

template <bool Parallel>
void BM_WeightedMaskedMean(benchmark::State& state) {
  const Stack s = make_stack(state.range(0), 10);
  for (auto _ : state) {
    auto out = Parallel ? horus::kernels::parallel::weighted_masked_mean(s.values, s.masks, s.weights, s.fallback, 1e-12)
                        : horus::kernels::serial::weighted_masked_mean(s.values, s.masks, s.weights, s.fallback, 1e-12);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_CoordinateMedian(benchmark::State& state) {
  const Stack s = make_stack(state.range(0), 10);
  for (auto _ : state) {
    auto out = Parallel ? horus::kernels::parallel::coordinate_median(s.values, s.masks, s.fallback)
                        : horus::kernels::serial::coordinate_median(s.values, s.masks, s.fallback);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_TrimmedMean(benchmark::State& state) {
  const Stack s = make_stack(state.range(0), 10);
  for (auto _ : state) {
    auto out = Parallel ? horus::kernels::parallel::coordinate_trimmed_mean(s.values, s.masks, 0.2, s.fallback)
                        : horus::kernels::serial::coordinate_trimmed_mean(s.values, s.masks, 0.2, s.fallback);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_PairwiseDistances(benchmark::State& state) {
  const Stack s = make_stack(20000, state.range(0));
  for (auto _ : state) {
    auto out = Parallel ? horus::kernels::parallel::pairwise_sq_distances(s.values, s.masks)
                        : horus::kernels::serial::pairwise_sq_distances(s.values, s.masks);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_WeightedMaskedMean<false>)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_WeightedMaskedMean<true>)->Arg(1 << 12)->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_CoordinateMedian<false>)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_CoordinateMedian<true>)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_TrimmedMean<false>)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_TrimmedMean<true>)->Arg(1 << 12)->Arg(1 << 16);
BENCHMARK(BM_PairwiseDistances<false>)->Arg(10)->Arg(50);
BENCHMARK(BM_PairwiseDistances<true>)->Arg(10)->Arg(50);

BENCHMARK_MAIN();
