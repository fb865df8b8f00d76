#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gafnet/dsp.hpp"
#include "gafnet/gaf.hpp"
#include "gafnet/model.hpp"
#include "gafnet/ops.hpp"

using namespace gafnet;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(gen);
  return t;
}

std::vector<double> random_series(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> s(n);
  for (double& v : s) v = d(gen);
  return s;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_Conv2d(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({16, h, h}, 3), k = random_tensor({32, 16, 3, 3}, 4), b = random_tensor({32}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, b, 2));
}
BENCHMARK(BM_Conv2d)->Arg(48)->Arg(96);

void BM_BiLstm(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const std::size_t din = 64, h = 64;
  const Tensor x = random_tensor({t, din}, 6);
  const ops::LstmWeights f{random_tensor({din, 4 * h}, 7), random_tensor({h, 4 * h}, 8), random_tensor({4 * h}, 9)};
  const ops::LstmWeights b{random_tensor({din, 4 * h}, 10), random_tensor({h, 4 * h}, 11), random_tensor({4 * h}, 12)};
  for (auto _ : state) benchmark::DoNotOptimize(ops::bilstm_forward(x, f, b));
}
BENCHMARK(BM_BiLstm)->Arg(96)->Arg(360);

void BM_GafTransform(benchmark::State& state) {
  const auto s = random_series(static_cast<std::size_t>(state.range(0)), 13);
  for (auto _ : state) benchmark::DoNotOptimize(gaf::gaf_transform(s));
}
BENCHMARK(BM_GafTransform)->Arg(96)->Arg(140)->Arg(360);

void BM_Bandpass(benchmark::State& state) {
  const auto coeffs = dsp::design_butterworth(4, 0.5, 40.0, 360.0);
  const dsp::Signal sig{random_series(static_cast<std::size_t>(state.range(0)), 14), 360.0};
  for (auto _ : state) benchmark::DoNotOptimize(dsp::apply_filter(coeffs, sig));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bandpass)->Arg(650000);

void BM_ForwardBackward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.input_length = static_cast<std::size_t>(state.range(0));
  model::ModelParams params = model::init_params(cfg, 15);
  const auto s = random_series(cfg.input_length, 16);
  const auto img = gaf::gaf_transform(s);
  for (auto _ : state) {
    const auto trace = model::forward(s, img, params, cfg);
    model::backward(trace, 0, params, cfg, 1.0);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(96)->Arg(140)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
