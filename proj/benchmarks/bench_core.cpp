#include <benchmark/benchmark.h>

#include "camo/codec.hpp"
#include "camo/diffusion.hpp"
#include "camo/metrics.hpp"
#include "camo/ops.hpp"
#include "camo/synth.hpp"

using namespace camo;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return Tensor<float>(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({4, 16, 16, c}, 1, true);
  const auto w = random_tensor({9 * c, c}, 2, true);
  const auto b = random_tensor({c}, 3, true);
  for (auto _ : state) {
    auto y = sum(square(conv2d(x, w, b, 3, 1)));
    y.backward();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(32);

void BM_Quantize(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto codebook = random_tensor({k, 3}, 1);
  const auto latent = random_tensor({4, 16, 16, 3}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(quantize(latent, codebook));
}
BENCHMARK(BM_Quantize)->Arg(128)->Arg(512);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  const auto codec = init_codec<float>(cfg.codec, 1);
  SynthOptions o;
  o.seed = 3;
  std::vector<SampleFeatures> features;
  for (int i = 0; i < 4; ++i) {
    const auto s = synth_sample(o, i);
    features.push_back(prepare_features(codec, s.image, s.mask, cfg.conditioning.slic, static_cast<std::uint64_t>(i)));
  }
  std::vector<const SampleFeatures*> batch;
  for (const auto& f : features) batch.push_back(&f);
  auto params = init_model<float>(cfg, 2);
  AdamState<float> adam;
  const auto sched = make_schedule(cfg.schedule);
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto r = train_step(params, adam, cfg, AdamConfig{}, codec.codebook(), batch, sched, Rng(5).split(step++));
    benchmark::DoNotOptimize(r.loss.total);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_MaskedSsim(benchmark::State& state) {
  SynthOptions o;
  const auto a = synth_sample(o, 0), b = synth_sample(o, 1);
  for (auto _ : state) benchmark::DoNotOptimize(masked_ssim(a.image, b.image, a.mask));
}
BENCHMARK(BM_MaskedSsim)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
