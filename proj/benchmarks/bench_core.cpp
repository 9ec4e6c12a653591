#include <vector>

#include <benchmark/benchmark.h>

#include "spectral_scope/graph_spectra.hpp"
#include "spectral_scope/intervention.hpp"
#include "spectral_scope/rng.hpp"
#include "spectral_scope/stats.hpp"

namespace ss = spectral_scope;
using Eigen::MatrixXd;

namespace {

MatrixXd random_attention(ss::CounterRng& rng, Eigen::Index n) {
  MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.unit();
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

std::vector<MatrixXd> random_heads(std::uint64_t seed, std::size_t h, Eigen::Index n) {
  ss::CounterRng rng(seed);
  std::vector<MatrixXd> heads;
  for (std::size_t k = 0; k < h; ++k) heads.push_back(random_attention(rng, n));
  return heads;
}

void BM_BuildLaplacian(benchmark::State& state) {
  const auto heads = random_heads(1, 1, state.range(0));
  const ss::TokenGraph g = ss::aggregate_heads(heads, ss::Aggregation::mass_weighted);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ss::build_laplacian(g, ss::LaplacianVariant::combinatorial));
  }
}
BENCHMARK(BM_BuildLaplacian)->Arg(8)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

void BM_AggregateHeads(benchmark::State& state) {
  const auto heads = random_heads(2, static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ss::aggregate_heads(heads, ss::Aggregation::mass_weighted));
  }
}
BENCHMARK(BM_AggregateHeads)->Arg(8)->Arg(32);

void BM_HeadGradients(benchmark::State& state) {
  const auto heads = random_heads(3, 32, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ss::head_gradients(heads, {}));
}
BENCHMARK(BM_HeadGradients)->Arg(16)->Arg(32);

void BM_PermutationTest(benchmark::State& state) {
  ss::CounterRng rng(4);
  std::vector<double> deltas(static_cast<std::size_t>(state.range(0)));
  for (auto& d : deltas) d = rng.unit() - 0.4;
  ss::ResamplingConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ss::paired_permutation_p(deltas, cfg));
}
BENCHMARK(BM_PermutationTest)->Arg(10)->Arg(20)->Arg(200);

void BM_Bootstrap(benchmark::State& state) {
  ss::CounterRng rng(5);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& d : v) d = rng.unit();
  ss::ResamplingConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ss::bootstrap_ci(v, cfg));
}
BENCHMARK(BM_Bootstrap)->Arg(20)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
