// Parallel kernels against their serial reference versions.
// Run with e.g. OMP_NUM_THREADS=8 ./kernel_bench

#include <benchmark/benchmark.h>

#include <vector>

#include "protoseg/core/rng.hpp"
#include "protoseg/kernels/kernels.hpp"
#include "protoseg/kernels/parallel.hpp"

using namespace protoseg;
namespace k = protoseg::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Conv3d(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), c = static_cast<int>(state.range(1));
  const auto g = k::conv_geometry(c, c, 3, 1, {n, n, n});
  const auto in = random_buffer(static_cast<std::size_t>(c) * g.in.size(), 1);
  const auto w = random_buffer(g.weight_size(), 2);
  const auto b = random_buffer(static_cast<std::size_t>(c), 3);
  std::vector<double> out(static_cast<std::size_t>(c) * g.out.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv3d_forward(g, in.data(), w.data(), b.data(), out.data());
    else
      k::reference::conv3d_forward(g, in.data(), w.data(), b.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["threads"] = Parallel ? k::max_threads() : 1;
}

template <bool Parallel>
void BM_InstanceNorm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), c = static_cast<int>(state.range(1));
  const std::size_t spatial = static_cast<std::size_t>(n) * n * n;
  const auto x = random_buffer(c * spatial, 4);
  std::vector<double> y(x.size()), mean(c), inv(c);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::instance_norm_forward(c, spatial, 1e-5, x.data(), y.data(), mean.data(), inv.data());
    else
      k::reference::instance_norm_forward(c, spatial, 1e-5, x.data(), y.data(), mean.data(), inv.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Resize(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), c = static_cast<int>(state.range(1));
  const Dims3 src{n, n, n}, dst{2 * n, 2 * n, 2 * n};
  const auto in = random_buffer(static_cast<std::size_t>(c) * src.size(), 5);
  std::vector<double> out(static_cast<std::size_t>(c) * dst.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::resize_trilinear_forward(c, src, dst, in.data(), out.data());
    else
      k::reference::resize_trilinear_forward(c, src, dst, in.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::size_t spatial = static_cast<std::size_t>(n) * n * n;
  const auto x = random_buffer(4 * spatial, 6);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::softmax_channels_forward(4, spatial, x.data(), y.data());
    else
      k::reference::softmax_channels_forward(4, spatial, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  k::AttentionShape s;
  s.queries = s.keys = static_cast<int>(state.range(0));
  s.heads = 8;
  s.head_dim = static_cast<int>(state.range(1)) / 8;
  const std::size_t qs = static_cast<std::size_t>(s.queries) * s.width();
  const auto q = random_buffer(qs, 7), kk = random_buffer(qs, 8), v = random_buffer(qs, 9);
  std::vector<double> out(qs), probs(static_cast<std::size_t>(s.heads) * s.queries * s.keys);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::attention_forward(s, q.data(), kk.data(), v.data(), out.data(), probs.data());
    else
      k::reference::attention_forward(s, q.data(), kk.data(), v.data(), out.data(), probs.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv3d<false>)->Name("conv3d/reference")->Args({32, 4})->Args({16, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3d<true>)->Name("conv3d/parallel")->Args({32, 4})->Args({16, 16})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InstanceNorm<false>)->Name("instance_norm/reference")->Args({32, 8})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_InstanceNorm<true>)->Name("instance_norm/parallel")->Args({32, 8})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Resize<false>)->Name("resize/reference")->Args({16, 4})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Resize<true>)->Name("resize/parallel")->Args({16, 4})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference")->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Attention<false>)->Name("attention/reference")->Args({64, 64})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Attention<true>)->Name("attention/parallel")->Args({64, 64})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
