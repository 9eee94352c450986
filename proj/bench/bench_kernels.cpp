// Serial reference vs OpenMP kernels, plus the corpus grid sweep.

#include <random>

#include <benchmark/benchmark.h>

#include "sounderfeit/dataset.hpp"
#include "sounderfeit/kernels.hpp"

using namespace sounderfeit;

namespace {

Matrix random(std::size_t r, std::size_t c) {
    std::mt19937_64 rng(r * 131 + c);
    std::uniform_real_distribution<double> u(-1, 1);
    Matrix m(r, c);
    for (auto& v : m.data) v = u(rng);
    return m;
}

// Shapes follow a 201 -> 100 layer on a batch of `rows`.
template <void (*Gemm)(const Matrix&, const Matrix&, Matrix&)>
void BM_gemm(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const Matrix a = random(rows, 201), b = random(201, 100);
    Matrix c;
    for (auto _ : state) {
        Gemm(a, b, c);
        benchmark::DoNotOptimize(c.data.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * 201 * 100));
}

void BM_bowed1_parallel(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_bowed1(static_cast<int>(state.range(0)), 1));
}

void BM_bowed1_serial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(build_bowed1_serial(static_cast<int>(state.range(0)), 1));
}

}  // namespace

BENCHMARK(BM_gemm<kernels::serial::gemm>)->Name("gemm/serial")->Arg(50)->Arg(1000)->Arg(5000);
BENCHMARK(BM_gemm<kernels::gemm>)->Name("gemm/openmp")->Arg(50)->Arg(1000)->Arg(5000)->UseRealTime();
BENCHMARK(BM_bowed1_serial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bowed1_parallel)->Arg(16)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
