// Microbenchmarks for the two attention blocks, the full forward pass, and
// a forward+backward training step at paper-scale shapes (T=16, D=32).

#include <benchmark/benchmark.h>

#include "attnmixer/data.hpp"
#include "attnmixer/model.hpp"
#include "attnmixer/rng.hpp"
#include "attnmixer/tensor.hpp"
#include "attnmixer/train.hpp"

using namespace attnmixer;

namespace {

Tensor random_tensor(Rng& rng, int rows, int cols) {
  Tensor t(rows, cols);
  for (auto& v : t.mutable_values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

MixerConfig bench_config(int window, int variates) {
  MixerConfig cfg;
  cfg.window = window;
  cfg.variates = variates;
  cfg.rounds = 1;
  cfg.gru_hidden = 32;
  cfg.lambda = 1e-3;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

static void BM_SampForward(benchmark::State& state) {
  const int window = static_cast<int>(state.range(0));
  const int variates = 32;
  MixerConfig cfg = bench_config(window, variates);
  MixerParams params = init_params(cfg);
  Rng rng(2);
  Tensor spatial = random_tensor(rng, variates, window);
  const double scale = std::sqrt(static_cast<double>(window));
  for (auto _ : state) {
    benchmark::DoNotOptimize(samp_forward(spatial, params.samp[0], scale));
  }
}
BENCHMARK(BM_SampForward)->Arg(16)->Arg(64)->Arg(256);

static void BM_TampForward(benchmark::State& state) {
  const int window = static_cast<int>(state.range(0));
  const int variates = 32;
  MixerConfig cfg = bench_config(window, variates);
  MixerParams params = init_params(cfg);
  Rng rng(3);
  Tensor temporal = random_tensor(rng, window, variates);
  const double scale = std::sqrt(static_cast<double>(variates));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tamp_forward(temporal, params.tamp[0], scale));
  }
}
BENCHMARK(BM_TampForward)->Arg(16)->Arg(64)->Arg(256);

static void BM_MixerForward(benchmark::State& state) {
  MixerConfig cfg = bench_config(16, 32);
  cfg.rounds = 2;
  MixerParams params = init_params(cfg);
  Rng rng(4);
  Tensor input = random_tensor(rng, cfg.window, cfg.variates);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mixer_forward(input, params, cfg, false));
  }
}
BENCHMARK(BM_MixerForward);

static void BM_TrainStep(benchmark::State& state) {
  MixerConfig cfg = bench_config(16, 32);
  cfg.rounds = 2;
  MixerParams params = init_params(cfg);
  auto list = params.parameters();
  Rng rng(5);
  Tensor input = random_tensor(rng, cfg.window, cfg.variates);
  Tensor target = Tensor::scalar(0.3);
  for (auto _ : state) {
    for (auto& p : list) p.tensor.zero_grad();
    MixerOutput out = mixer_forward(input, params, cfg, true);
    Tensor loss = total_loss(target, out.prediction, out.record, cfg.lambda, cfg.smpr_mode);
    backward(loss);
    benchmark::DoNotOptimize(loss.value());
  }
}
BENCHMARK(BM_TrainStep);

static void BM_GenerateSynthetic(benchmark::State& state) {
  SynthSpec spec = SynthSpec::g1();
  spec.steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen_synthetic(spec, 7));
  }
}
BENCHMARK(BM_GenerateSynthetic)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
