#include <benchmark/benchmark.h>

#include "inductlab/induction_scorer.hpp"
#include "inductlab/model_factory.hpp"
#include "inductlab/recall_probe.hpp"
#include "inductlab/rng.hpp"
#include "inductlab/tensor.hpp"

namespace {

using namespace inductlab;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = static_cast<float>(rng.uniform01() - 0.5);
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_ForwardCircuit(benchmark::State& state) {
  const Checkpoint ck = build_induction_circuit({});
  const Tokens prompt = build_repeat_prompt(static_cast<std::size_t>(state.range(0)), ck.config.vocab_size, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward(ck, prompt));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(prompt.size()));
}
BENCHMARK(BM_ForwardCircuit)->Arg(25)->Arg(50)->Arg(150);

void BM_ForwardRandomModel(benchmark::State& state) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 64;
  c.d_head = 16;
  c.vocab_size = 160;
  c.max_seq = 160;
  const Checkpoint ck = build_random_model(c, 1);
  const Tokens prompt = build_repeat_prompt(64, c.vocab_size, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forward(ck, prompt, {}, true));
}
BENCHMARK(BM_ForwardRandomModel);

void BM_LagCurve(benchmark::State& state) {
  const Checkpoint ck = build_induction_circuit({});
  const ProbeConfig cfg = ProbeConfig::with_pool(128, 64, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(lag_curve(ck, cfg));
}
BENCHMARK(BM_LagCurve)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
