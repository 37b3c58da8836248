#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "multirobust/eval.hpp"
#include "multirobust/sandbox/attacks.hpp"
#include "multirobust/sandbox/dataset.hpp"
#include "multirobust/sandbox/rng.hpp"

namespace {

const char* const kFamilies[] = {"linf", "l2", "l1", "brightness", "contrast", "translate"};
const double kMaxEps[] = {0.2, 1.25, 5.0, 0.5, 0.8, 1.5};

struct Fixture {
  Fixture() : data(mrb::make_dataset(mrb::DatasetConfig{}, 7)) {
    mrb::Rng rng(3);
    model = mrb::SandboxModel::random(8, 8, 32, 3, rng);
  }
  mrb::Dataset data;
  mrb::SandboxModel model;
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Attack(benchmark::State& state) {
  const auto& f = fixture();
  const auto k = static_cast<std::size_t>(state.range(0));
  const mrb::AttackFamily family(kFamilies[k], mrb::uniform_grid(kMaxEps[k], 5));
  const auto budget = mrb::AttackBudget::for_family(family, family.grid().back());
  std::size_t i = 0;
  for (auto _ : state) {
    mrb::Rng rng(i);
    const auto out = mrb::run_attack(f.model, f.data.image(i % f.data.size()), f.data.labels[i % f.data.size()],
                                     budget, &rng);
    benchmark::DoNotOptimize(out.loss);
    ++i;
  }
  state.SetLabel(kFamilies[k]);
}
BENCHMARK(BM_Attack)->DenseRange(0, 5)->Unit(benchmark::kMicrosecond);

void BM_MinimalEpsilonSearch(benchmark::State& state) {
  const auto& f = fixture();
  const auto strategy = state.range(0) == 0 ? mrb::SearchStrategy::kBinary : mrb::SearchStrategy::kExhaustive;
  const mrb::AttackFamily family("linf", mrb::uniform_grid(0.2, static_cast<std::size_t>(state.range(1))));
  std::size_t i = 0;
  std::int64_t runs = 0;
  for (auto _ : state) {
    const std::size_t n = i % f.data.size();
    const auto r = mrb::minimal_epsilon_search(f.model, f.data.image(n), f.data.labels[n], family, i, strategy);
    runs += r.attack_runs;
    ++i;
  }
  state.counters["attacks_per_image"] = benchmark::Counter(static_cast<double>(runs) / static_cast<double>(i));
  state.SetLabel(state.range(0) == 0 ? "binary" : "exhaustive");
}
BENCHMARK(BM_MinimalEpsilonSearch)
    ->ArgsProduct({{0, 1}, {5, 10, 20}})
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
