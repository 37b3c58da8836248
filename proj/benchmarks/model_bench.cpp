#include <benchmark/benchmark.h>

#include <vector>

#include "multirobust/sandbox/model.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace {

struct Fixture {
  explicit Fixture(int hidden) {
    mrb::Rng rng(11);
    model = mrb::SandboxModel::random(8, 8, hidden, 3, rng);
    x.resize(model.input_dim());
    for (double& v : x) v = rng.uniform();
  }
  mrb::SandboxModel model;
  std::vector<double> x;
  mrb::Workspace ws;
};

void BM_Forward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mrb::forward(f.model, f.x, 1, f.ws));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(32)->Arg(128);

void BM_InputGradient(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  std::vector<double> grad(f.model.input_dim());
  for (auto _ : state) {
    benchmark::DoNotOptimize(mrb::input_gradient(f.model, f.x, 1, grad, f.ws));
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_InputGradient)->Arg(0)->Arg(32)->Arg(128);

void BM_ParameterGradient(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  auto acc = mrb::Gradients::zeros_like(f.model);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mrb::accumulate_gradients(f.model, f.x, 1, 1.0, acc, f.ws));
  }
}
BENCHMARK(BM_ParameterGradient)->Arg(0)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
