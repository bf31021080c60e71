#include <benchmark/benchmark.h>

#include <random>

#include "a2q/accsim.hpp"
#include "a2q/linalg.hpp"

using namespace a2q;

namespace {

IntMatrix random_codes(std::size_t rows, std::size_t cols, std::int64_t lo, std::int64_t hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> d(lo, hi);
  IntMatrix m(rows, cols);
  for (auto& v : m.data()) v = d(rng);
  return m;
}

RealMatrix random_real(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  RealMatrix m(rows, cols);
  for (auto& v : m.data()) v = d(rng);
  return m;
}

// 1-bit inputs against 8-bit codes, the linear-classifier shape.
template <bool Parallel>
void BM_Matvec(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto mode = static_cast<accsim::AccMode>(state.range(1));
  const auto X = random_codes(batch, 784, 0, 1, 1);
  const auto W = random_codes(10, 784, -128, 127, 2);
  for (auto _ : state) {
    auto r = Parallel ? accsim::matvec_accumulate(X, W, 14, mode)
                      : accsim::reference::matvec_accumulate(X, W, 14, mode);
    benchmark::DoNotOptimize(r.y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch * 10 * 784));
}

template <bool Parallel>
void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto A = random_real(n, 784, 3);
  const auto B = random_real(64, 784, 4);
  for (auto _ : state) {
    auto C = Parallel ? linalg::gemm_nt(A, B) : linalg::reference::gemm_nt(A, B);
    benchmark::DoNotOptimize(C.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 64 * 784));
}

void MatvecArgs(benchmark::internal::Benchmark* b) {
  for (int batch : {64, 512}) {
    for (int mode = 0; mode < 3; ++mode) b->Args({batch, mode});
  }
}

}  // namespace

BENCHMARK(BM_Matvec<false>)->Name("matvec/serial")->Apply(MatvecArgs);
BENCHMARK(BM_Matvec<true>)->Name("matvec/openmp")->Apply(MatvecArgs);
BENCHMARK(BM_GemmNT<false>)->Name("gemm_nt/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_GemmNT<true>)->Name("gemm_nt/openmp")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
