// Serial reference vs OpenMP kernels. Thread count comes from VKD_THREADS.

#include <benchmark/benchmark.h>

#include <cstdlib>

#include "vkd/linalg.hpp"
#include "vkd/projector.hpp"
#include "vkd/random.hpp"

namespace {

using vkd::Matrix;

int env_threads() {
  const char* v = std::getenv("VKD_THREADS");
  const int n = v == nullptr ? 1 : std::atoi(v);
  return n > 0 ? n : 1;
}

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  vkd::Rng rng = vkd::make_stream(0, "bench");
  const Matrix a = vkd::random_normal(n, n, 1.0, rng);
  const Matrix b = vkd::random_normal(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(vkd::linalg::serial::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  vkd::linalg::set_num_threads(env_threads());
  vkd::Rng rng = vkd::make_stream(0, "bench");
  const Matrix a = vkd::random_normal(n, n, 1.0, rng);
  const Matrix b = vkd::random_normal(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(vkd::linalg::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
  state.counters["threads"] = vkd::linalg::num_threads();
}

void BM_Expm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  vkd::Rng rng = vkd::make_stream(0, "bench");
  const Matrix w = vkd::projector::skew(vkd::random_normal(n, n, 0.05, rng));
  for (auto _ : state) benchmark::DoNotOptimize(vkd::linalg::expm(w));
}

void BM_ExpmFrechet(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  vkd::Rng rng = vkd::make_stream(0, "bench");
  const Matrix w = vkd::projector::skew(vkd::random_normal(n, n, 0.05, rng));
  const Matrix e = vkd::random_normal(n, n, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(vkd::linalg::expm_frechet(w, e));
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulParallel)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Expm)->RangeMultiplier(2)->Range(64, 512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExpmFrechet)->RangeMultiplier(2)->Range(64, 256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
