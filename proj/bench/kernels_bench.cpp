#include <benchmark/benchmark.h>

#include <vector>

#include "streamcast/common.hpp"
#include "streamcast/kernels.hpp"

// Serial reference vs OpenMP kernels. Run with --benchmark_filter=matmul etc.;
// the OMP variants honor kernels::set_max_threads, swept as the range arg.

using namespace streamcast;

namespace {

std::vector<double> random_matrix(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> m(n);
  for (double& v : m) v = rng.uniform(-1.0, 1.0);
  return m;
}

void bm_matmul_serial(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  auto a = random_matrix(1, dim * dim);
  auto b = random_matrix(2, dim * dim);
  std::vector<double> c(dim * dim);
  for (auto _ : state) {
    kernels::matmul_serial(a.data(), b.data(), c.data(), dim, dim, dim);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * dim * dim * dim);
}

void bm_matmul_omp(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  kernels::set_max_threads(static_cast<int>(state.range(1)));
  auto a = random_matrix(1, dim * dim);
  auto b = random_matrix(2, dim * dim);
  std::vector<double> c(dim * dim);
  for (auto _ : state) {
    kernels::matmul_omp(a.data(), b.data(), c.data(), dim, dim, dim);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * dim * dim * dim);
  kernels::set_max_threads(1);
}

void bm_softmax_serial(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  auto x = random_matrix(3, rows * cols);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    kernels::softmax_rows_serial(x.data(), y.data(), rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_softmax_omp(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  kernels::set_max_threads(static_cast<int>(state.range(1)));
  auto x = random_matrix(3, rows * cols);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    kernels::softmax_rows_omp(x.data(), y.data(), rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
  kernels::set_max_threads(1);
}

void bm_layernorm_serial(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  auto x = random_matrix(4, rows * cols);
  auto gain = random_matrix(5, cols);
  auto bias = random_matrix(6, cols);
  std::vector<double> y(rows * cols), mean(rows), rstd(rows);
  for (auto _ : state) {
    kernels::layernorm_rows_serial(x.data(), gain.data(), bias.data(), 1e-5, y.data(),
                                   mean.data(), rstd.data(), rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_layernorm_omp(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  kernels::set_max_threads(static_cast<int>(state.range(1)));
  auto x = random_matrix(4, rows * cols);
  auto gain = random_matrix(5, cols);
  auto bias = random_matrix(6, cols);
  std::vector<double> y(rows * cols), mean(rows), rstd(rows);
  for (auto _ : state) {
    kernels::layernorm_rows_omp(x.data(), gain.data(), bias.data(), 1e-5, y.data(), mean.data(),
                                rstd.data(), rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
  kernels::set_max_threads(1);
}

}  // namespace

BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul_omp)
    ->Args({64, 2})
    ->Args({128, 2})
    ->Args({256, 2})
    ->Args({64, 4})
    ->Args({128, 4})
    ->Args({256, 4});
BENCHMARK(bm_softmax_serial)->Arg(64)->Arg(512);
BENCHMARK(bm_softmax_omp)->Args({64, 4})->Args({512, 4});
BENCHMARK(bm_layernorm_serial)->Arg(64)->Arg(512);
BENCHMARK(bm_layernorm_omp)->Args({64, 4})->Args({512, 4});

BENCHMARK_MAIN();
