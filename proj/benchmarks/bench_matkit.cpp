#include "rclqr/matkit.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace rclqr;

namespace {

Matrix stable_matrix(Index n, double rho, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  Matrix f(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) f(i, j) = nd(g);
  return f * (rho / spectral_radius(f));
}

void BM_Lyapunov(benchmark::State& state) {
  const auto n = static_cast<Index>(state.range(0));
  const Matrix f = stable_matrix(n, 0.95, 1);
  const SymMatrix c = SymMatrix::identity(n);
  for (auto _ : state) benchmark::DoNotOptimize(solve_discrete_lyapunov(f, c));
}
BENCHMARK(BM_Lyapunov)->Arg(2)->Arg(4)->Arg(8)->Arg(16);

void BM_SvecRoundTrip(benchmark::State& state) {
  const auto d = static_cast<Index>(state.range(0));
  Matrix a = Matrix::Random(d, d);
  const SymMatrix s = SymMatrix::symmetrize(a);
  for (auto _ : state) benchmark::DoNotOptimize(smat(svec(s)));
}
BENCHMARK(BM_SvecRoundTrip)->Arg(3)->Arg(6)->Arg(8);

}  // namespace
