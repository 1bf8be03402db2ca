#include "rclqr/config.hpp"
#include "rclqr/learner.hpp"

#include <benchmark/benchmark.h>

using namespace rclqr;

namespace {

void BM_Feature(benchmark::State& state) {
  const auto n = static_cast<Index>(state.range(0));
  const Vector x = Vector::LinSpaced(n, -1.0, 1.0);
  const Vector u = Vector::Constant(2, 0.5);
  Vector z;
  Vector psi;
  for (auto _ : state) {
    feature_into(x, u, z, psi);
    benchmark::DoNotOptimize(psi.data());
  }
}
BENCHMARK(BM_Feature)->Arg(2)->Arg(4)->Arg(8);

// Throughput of the full actor-critic recursion, reported as steps per second.
void BM_TrainSteps(benchmark::State& state, const char* name) {
  const RunConfig cfg = load_config(std::string(RCLQR_SOURCE_DIR) + "/configs/" + name + ".json");
  const Problem pr = make_problem(cfg);
  const Plant plant(cfg.system, cfg.noise);
  const CostModel cm = CostModel::from(pr.cost, pr.moments);
  TrainConfig tc = cfg.train;
  tc.steps = state.range(0);
  for (auto _ : state) {
    TrainingResult r = train(plant, cm, tc, LearnerState::initial(cfg.policy0, cfg.x0));
    benchmark::DoNotOptimize(r.state.mu);
  }
  state.SetItemsProcessed(state.iterations() * tc.steps);
}
BENCHMARK_CAPTURE(BM_TrainSteps, two_state_binding, "two_state_binding")->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainSteps, two_state_frozen, "two_state")->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
