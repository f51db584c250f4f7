#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "kaliko/kernels.hpp"

using namespace kaliko::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> spd(std::size_t n) {
  auto g = random_values(n * n, 7);
  std::vector<double> a(n * n, 0.0);
  serial::gemm(Trans::no, Trans::yes, n, n, n, 1.0, g.data(), g.data(), 0.0, a.data());
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] += static_cast<double>(n);
  return a;
}

using GemmFn = void (*)(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*, const double*,
                        double, double*);

template <GemmFn F, Trans TA, Trans TB>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    F(TA, TB, n, n, n, 1.0, a.data(), b.data(), 0.0, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["flops"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}

template <void (*F)(double*, std::size_t, double)>
void BM_cholesky(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto base = spd(n);
  std::vector<double> a(n * n);
  for (auto _ : state) {
    a = base;
    F(a.data(), n, 1e-12);
    benchmark::DoNotOptimize(a.data());
  }
}

template <void (*F)(const double*, std::size_t, double*, std::size_t)>
void BM_cholesky_solve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto l = spd(n);
  serial::cholesky(l.data(), n);
  const auto rhs = random_values(n * n, 3);
  std::vector<double> b(n * n);
  for (auto _ : state) {
    b = rhs;
    F(l.data(), n, b.data(), n);
    benchmark::DoNotOptimize(b.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<serial::gemm, Trans::no, Trans::no>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm, Trans::no, Trans::no>)->Name("gemm_nn/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<serial::gemm, Trans::yes, Trans::no>)->Name("gemm_tn/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm, Trans::yes, Trans::no>)->Name("gemm_tn/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<serial::gemm, Trans::no, Trans::yes>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_gemm<gemm, Trans::no, Trans::yes>)->Name("gemm_nt/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_cholesky<serial::cholesky>)->Name("cholesky/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_cholesky<cholesky>)->Name("cholesky/parallel")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_cholesky_solve<serial::cholesky_solve>)->Name("cholesky_solve/serial")->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_cholesky_solve<cholesky_solve>)->Name("cholesky_solve/parallel")->RangeMultiplier(2)->Range(16, 256);

BENCHMARK_MAIN();
