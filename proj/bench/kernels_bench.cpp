// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stepcat/kernels.hpp"

namespace {

using namespace stepcat::kernels;

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const GemmArgs g{m, k, n, false, state.range(3) != 0, false};
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::gemm(g, a.data(), b.data(), c.data());
    else
      serial::gemm(g, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

// Shapes seen in a desk-scale forward pass: pointwise maps over joints x frames,
// per-head attention products, and one large square case.
void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"m", "k", "n", "trans_b"});
  b->Args({200, 48, 48, 0})->Args({200, 48, 48, 1})->Args({232, 80, 40, 0})->Args({25, 8, 25, 1});
  b->Args({512, 512, 512, 0});
}
BENCHMARK(BM_Gemm<false>)->Apply(gemm_shapes);
BENCHMARK(BM_Gemm<true>)->Apply(gemm_shapes);

ConvGeometry conv_geometry(const benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto t = static_cast<std::size_t>(state.range(1));
  const auto c = static_cast<std::size_t>(state.range(2));
  return make_conv_geometry(rows, t, c, c, 5, static_cast<std::size_t>(state.range(3)), 1, false, Padding::Same);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = conv_geometry(state);
  const auto x = random_vec(g.rows * g.t_in * g.c_in, 3), w = random_vec(g.kernel * g.c_in * g.c_out, 4);
  std::vector<double> y(g.rows * g.t_out * g.c_out);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::conv_temporal_forward(g, x.data(), w.data(), y.data());
    else
      serial::conv_temporal_forward(g, x.data(), w.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(
      static_cast<std::int64_t>(state.iterations() * g.rows * g.t_out * g.kernel * g.c_in * g.c_out));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = conv_geometry(state);
  const auto x = random_vec(g.rows * g.t_in * g.c_in, 5), w = random_vec(g.kernel * g.c_in * g.c_out, 6);
  const auto dy = random_vec(g.rows * g.t_out * g.c_out, 7);
  std::vector<double> dx(x.size()), dw(w.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::conv_temporal_backward_input(g, dy.data(), w.data(), dx.data());
      parallel::conv_temporal_backward_weight(g, x.data(), dy.data(), dw.data());
    } else {
      serial::conv_temporal_backward_input(g, dy.data(), w.data(), dx.data());
      serial::conv_temporal_backward_weight(g, x.data(), dy.data(), dw.data());
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"rows", "t", "c", "dilation"});
  b->Args({25, 32, 16, 1})->Args({25, 8, 32, 2})->Args({25, 64, 64, 1});
}
BENCHMARK(BM_ConvForward<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<true>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<true>)->Apply(conv_shapes);

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const auto x = random_vec(rows * n, 8);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::softmax_rows(rows, n, x.data(), y.data());
    else
      serial::softmax_rows(rows, n, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Softmax<false>)->Args({800, 25})->Args({4096, 256});
BENCHMARK(BM_Softmax<true>)->Args({800, 25})->Args({4096, 256});

}  // namespace

BENCHMARK_MAIN();
