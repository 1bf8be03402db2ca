#include "rclqr/config.hpp"
#include "rclqr/oracle.hpp"

#include <benchmark/benchmark.h>

using namespace rclqr;

namespace {

const RunConfig& four_state() {
  static const RunConfig cfg = load_config(std::string(RCLQR_SOURCE_DIR) + "/configs/four_state.json");
  return cfg;
}

const Problem& four_state_problem() {
  static const Problem pr = make_problem(four_state());
  return pr;
}

void BM_LagrangianValue(benchmark::State& state) {
  const Problem& pr = four_state_problem();
  for (auto _ : state) benchmark::DoNotOptimize(lagrangian_value(pr, four_state().policy0, 0.1));
}
BENCHMARK(BM_LagrangianValue);

void BM_ExactGradient(benchmark::State& state) {
  const Problem& pr = four_state_problem();
  for (auto _ : state) benchmark::DoNotOptimize(exact_gradient(pr, four_state().policy0, 0.1));
}
BENCHMARK(BM_ExactGradient);

void BM_MinimizeLagrangian(benchmark::State& state) {
  const Problem& pr = four_state_problem();
  for (auto _ : state) benchmark::DoNotOptimize(minimize_lagrangian(pr, four_state().policy0, 0.1, {}));
}
BENCHMARK(BM_MinimizeLagrangian)->Unit(benchmark::kMillisecond);

}  // namespace
