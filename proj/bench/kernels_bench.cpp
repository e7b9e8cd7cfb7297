#include <benchmark/benchmark.h>

#include "curlyfm/kernels.hpp"
#include "curlyfm/rng.hpp"

namespace {

using curlyfm::Matrix;
namespace k = curlyfm::kernels;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  curlyfm::Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// Shapes mirror a forward pass: batch x width against width x width weights.
template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void bm_nt(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), w = static_cast<std::size_t>(st.range(1));
  const Matrix a = random_matrix(n, w, 1), b = random_matrix(w, w, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(a, b));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * w * w));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void bm_nn(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), w = static_cast<std::size_t>(st.range(1));
  const Matrix a = random_matrix(n, w, 1), b = random_matrix(w, w, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(a, b));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * w * w));
}

// Weight gradient: batch reduction.
template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void bm_tn(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), w = static_cast<std::size_t>(st.range(1));
  const Matrix a = random_matrix(n, w, 1), b = random_matrix(n, w, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(a, b));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * w * w));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void bm_sqdist(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0)), d = static_cast<std::size_t>(st.range(1));
  const Matrix a = random_matrix(n, d, 1), b = random_matrix(n, d, 2);
  for (auto _ : st) benchmark::DoNotOptimize(Fn(a, b));
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * n * n));
}

void shapes(benchmark::internal::Benchmark* b) {
  for (long n : {256, 1024})
    for (long w : {64, 128}) b->Args({n, w});
}

void clouds(benchmark::internal::Benchmark* b) {
  for (long n : {256, 1000})
    for (long d : {3, 20}) b->Args({n, d});
}

}  // namespace

BENCHMARK(bm_nt<k::reference::gemm_nt>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(bm_nt<k::gemm_nt>)->Name("gemm_nt/openmp")->Apply(shapes);
BENCHMARK(bm_nn<k::reference::gemm_nn>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(bm_nn<k::gemm_nn>)->Name("gemm_nn/openmp")->Apply(shapes);
BENCHMARK(bm_tn<k::reference::gemm_tn>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(bm_tn<k::gemm_tn>)->Name("gemm_tn/openmp")->Apply(shapes);
BENCHMARK(bm_sqdist<k::reference::pairwise_sqdist>)->Name("sqdist/serial")->Apply(clouds);
BENCHMARK(bm_sqdist<k::pairwise_sqdist>)->Name("sqdist/openmp")->Apply(clouds);

BENCHMARK_MAIN();
