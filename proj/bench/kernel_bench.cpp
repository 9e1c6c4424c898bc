#include <random>

#include <benchmark/benchmark.h>

#include "ftcn/tensor/kernels.hpp"

namespace {

using ftcn::Tensor;

Tensor filled(ftcn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

struct ConvCase {
  ftcn::WindowGeometry g = ftcn::make_geometry(1, 16, 16, 8, 32, 32, {3, 3, 3}, {1, 1, 1},
                                               {1, 1, 1});
  Tensor x = filled({1, 16, 8, 32, 32}, 1);
  Tensor w = filled({16, 16, 3, 3, 3}, 2);
  std::vector<float> y = std::vector<float>(16 * 8 * 32 * 32);
};

void BM_ConvReference(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state) {
    ftcn::reference::conv3d_forward<float>(c.g, c.x.data(), c.w.data(), {}, c.y);
    benchmark::DoNotOptimize(c.y.data());
  }
}

void BM_ConvParallel(benchmark::State& state) {
  ConvCase c;
  ftcn::kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ftcn::kernels::conv3d_forward<float>(c.g, c.x.data(), c.w.data(), {}, c.y);
    benchmark::DoNotOptimize(c.y.data());
  }
}

void BM_LinearReference(benchmark::State& state) {
  const ftcn::MatmulDims d{17, 1024, 1024};
  const Tensor x = filled({17, 1024}, 3), w = filled({1024, 1024}, 4), b = filled({1024}, 5);
  std::vector<float> y(17 * 1024);
  for (auto _ : state) {
    ftcn::reference::linear_forward<float>(d, x.data(), w.data(), b.data(), y);
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_LinearParallel(benchmark::State& state) {
  const ftcn::MatmulDims d{17, 1024, 1024};
  const Tensor x = filled({17, 1024}, 3), w = filled({1024, 1024}, 4), b = filled({1024}, 5);
  std::vector<float> y(17 * 1024);
  ftcn::kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ftcn::kernels::linear_forward<float>(d, x.data(), w.data(), b.data(), y);
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(BM_ConvReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
