#include <benchmark/benchmark.h>

#include <random>

#include "seismogpt/forecasting.hpp"
#include "seismogpt/models.hpp"
#include "seismogpt/ops.hpp"
#include "seismogpt/optim.hpp"
#include "seismogpt/transformer.hpp"

using namespace seismo;

namespace {

Tensor randn(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = nd(rng);
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = randn({n, n}, 1), b = randn({n, n}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ParameterStore store;
  std::mt19937_64 rng(3);
  MultiHeadAttention mha(store, "attn", AttentionConfig{}, rng);
  const Tensor x = randn({1, n, 128}, 4);
  const Tensor mask = causal_mask(n);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(mha.forward(x, mask).data().data());
}
BENCHMARK(BM_Attention)->Arg(40)->Arg(64);

void BM_SingleForward(benchmark::State& state) {
  SingleStationModel m{ModelConfig{}};
  const Tensor x = randn({64, 16, 3}, 5);
  ForwardContext ctx;
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.single_forward(x, {}, ctx).data().data());
}
BENCHMARK(BM_SingleForward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig c;
  c.d_model = 64;
  c.n_layers = 2;
  SingleStationModel m(c);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = randn({batch, 1, 64, 16, 3}, 6), y = randn({batch, 1, 64, 16, 3}, 7);
  std::mt19937_64 drop(8);
  AdamState adam;
  for (auto _ : state) {
    ForwardContext ctx{true, &drop};
    const Tensor d = sub(m.predict_tokens(x, {}, ctx), y);
    Tensor loss = mean(mul(d, d));
    m.params().zero_grad();
    loss.backward();
    adam_step(m.params(), adam, 1e-5);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Forecast24(benchmark::State& state) {
  SingleStationModel m{ModelConfig{}};
  TokenSequence ctx;
  ctx.token_len = 16;
  ctx.sampling_rate_hz = 1.9;
  const Tensor x = randn({40, 16, 3}, 9);
  ctx.tokens.assign(x.data().begin(), x.data().end());
  for (auto _ : state) benchmark::DoNotOptimize(forecast(m, ctx, 24).steps);
}
BENCHMARK(BM_Forecast24)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
