#include "rclqr/errors.hpp"
#include "rclqr/plant.hpp"
#include "support/fixtures.hpp"
#include "support/reference_math.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rclqr;
using namespace rclqr::testing;

namespace {

NoiseSpec single(Primitive p) { return NoiseSpec({NoiseChannel{{std::move(p)}}}); }

GaussianMixture bimodal_mixture() { return GaussianMixture{{{0.3, 5.0, 8.0}, {0.7, 8.0, 10.0}}}; }

// Sample mean and variance of the first coordinate.
std::pair<double, double> sample_stats(const NoiseSpec& spec, long n, std::uint64_t seed) {
  Rng rng(seed);
  double s = 0.0;
  double s2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const double v = spec.sample(rng)(0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / static_cast<double>(n);
  return {mean, s2 / static_cast<double>(n) - mean * mean};
}

}  // namespace

TEST(SampleNoise, GaussianMeanWithinClt) {
  const auto [mean, var] = sample_stats(single(Gaussian{0.0, 4.0}), 1000000, 1);
  EXPECT_LT(std::abs(mean), 3.0 * 2.0 / 1e3);
  EXPECT_NEAR(var, 4.0, 0.05);
}

TEST(SampleNoise, UniformSupportAndMoments) {
  const NoiseSpec spec = single(Uniform{0.0, 0.5});
  Rng rng(2);
  for (int i = 0; i < 100000; ++i) {
    const double v = sample_noise(spec, rng)(0);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 0.5);
  }
  EXPECT_DOUBLE_EQ(spec.mean()(0), 0.25);
  EXPECT_DOUBLE_EQ(spec.covariance()(0, 0), 1.0 / 48.0);
}

TEST(SampleNoise, MixtureMeanFormula) {
  const NoiseSpec spec = single(bimodal_mixture());
  EXPECT_DOUBLE_EQ(spec.mean()(0), 0.3 * 5 + 0.7 * 8);
  // 0.3 (8 + 25) + 0.7 (10 + 64) - 7.1^2
  EXPECT_NEAR(spec.covariance()(0, 0), 0.3 * 33 + 0.7 * 74 - 7.1 * 7.1, 1e-12);
  const long n = 1000000;
  const auto [mean, var] = sample_stats(spec, n, 3);
  EXPECT_LT(std::abs(mean - 7.1), 3.0 * std::sqrt(spec.covariance()(0, 0) / n));
}

TEST(SampleNoise, SeedDeterminism) {
  const NoiseSpec& spec = config("four_state").noise;
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(spec.sample(a), spec.sample(b));
}

TEST(NoiseSpec, ValidationErrors) {
  EXPECT_THROW(single(GaussianMixture{{{0.3, 0, 1}, {0.6, 0, 1}}}), InvalidArgument);
  EXPECT_THROW(single(GaussianMixture{{{-0.5, 0, 1}, {1.5, 0, 1}}}), InvalidArgument);
  EXPECT_THROW(single(Gaussian{0, 0}), InvalidArgument);
  EXPECT_THROW(single(Uniform{1, 1}), InvalidArgument);
  EXPECT_THROW(NoiseSpec({NoiseChannel{{Gaussian{}}}}, Matrix::Identity(2, 2)), InvalidArgument);
}

TEST(ComputeMoments, GaussianFourthMoment) {
  const NoiseMoments nm = compute_moments(single(Gaussian{0, 4}), SymMatrix::identity(1), 1000000, 8);
  EXPECT_EQ(nm.wbar(0), 0.0);
  EXPECT_EQ(nm.W(0, 0), 4.0);
  EXPECT_LT(std::abs(nm.M3(0)), 3.0 * nm.M3_stderr(0));
  EXPECT_LT(std::abs(nm.m4 - 32.0), 3.0 * nm.m4_stderr);
}

TEST(ComputeMoments, UniformAnalyticMoments) {
  const NoiseMoments nm = compute_moments(single(Uniform{0, 0.5}), SymMatrix::identity(1), 10000);
  EXPECT_DOUBLE_EQ(nm.wbar(0), 0.25);
  EXPECT_DOUBLE_EQ(nm.W(0, 0), 1.0 / 48.0);
}

TEST(ComputeMoments, SymmetricSpecHasNoThirdMoment) {
  const NoiseSpec spec({NoiseChannel{{Gaussian{0, 1}, Uniform{-1, 1}}}, NoiseChannel{{Gaussian{0, 2}}}});
  const NoiseMoments nm = compute_moments(spec, SymMatrix(Matrix((Matrix(2, 2) << 2, 0.5, 0.5, 1).finished())), 200000);
  for (Index i = 0; i < 2; ++i) EXPECT_LT(std::abs(nm.M3(i)), 3.0 * nm.M3_stderr(i));
}

TEST(ComputeMoments, RejectsTooFewSamples) {
  EXPECT_THROW(compute_moments(single(Gaussian{}), SymMatrix::identity(1), 9999), InvalidArgument);
}

TEST(ComputeMoments, AnalyticMeanAndCovarianceMatchMonteCarlo) {
  for (const char* name : {"four_state", "two_state"}) {
    const NoiseSpec& spec = config(name).noise;
    const Index n = spec.state_dim();
    const long N = 1000000;
    Rng rng(17);
    Vector s = Vector::Zero(n);
    Matrix s2 = Matrix::Zero(n, n);
    std::vector<Vector> draws;
    for (long i = 0; i < N; ++i) {
      const Vector w = spec.sample(rng);
      s += w;
      s2 += w * w.transpose();
    }
    const Vector mean = s / N;
    const Matrix cov = s2 / N - mean * mean.transpose();
    const Matrix W = spec.covariance().matrix();
    for (Index i = 0; i < n; ++i) {
      EXPECT_LT(std::abs(mean(i) - spec.mean()(i)), 4.0 * std::sqrt(W(i, i) / N) + 1e-12) << name;
      // Standard error of a variance estimate is at most sqrt(E w^4 / N); bound it loosely by 4 W sqrt(3/N).
      EXPECT_LT(std::abs(cov(i, i) - W(i, i)), 4.0 * W(i, i) * std::sqrt(3.0 / N) + 1e-12) << name;
    }
  }
}

TEST(PlantStep, DeterministicLinearity) {
  const SystemModel sys(Matrix((Matrix(2, 2) << 0.9, 0.3, 0, 0.8).finished()), Matrix((Matrix(2, 1) << 0, 1).finished()));
  const Plant plant(sys, NoiseSpec({NoiseChannel{{Gaussian{}}}}, Matrix::Zero(2, 1)));
  Rng rng(1);
  const Vector x = (Vector(2) << 1.5, -2).finished();
  const StepResult r = plant.step(x, Policy(Matrix::Zero(1, 2), Vector::Zero(1), 0.0), rng);
  EXPECT_TRUE(r.x_next.isApprox(sys.A * x));
  EXPECT_EQ(r.u(0), 0.0);
}

TEST(PlantStep, ScalarArithmetic) {
  const Plant plant(SystemModel(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0)),
                    NoiseSpec({NoiseChannel{{Gaussian{}}}}, Matrix::Zero(1, 1)));
  Rng rng(1);
  const StepResult r = plant.step(Vector::Constant(1, 1.0), scalar_policy(0.2, 0.0, 0.0), rng);
  EXPECT_DOUBLE_EQ(r.u(0), -0.2);
  EXPECT_DOUBLE_EQ(r.x_next(0), 0.3);
}

TEST(PlantStep, StationaryMomentsMatchClosedLoop) {
  const RunConfig& cfg = config("two_state");
  const Problem& pr = problem("two_state");
  const Plant plant(cfg.system, cfg.noise);
  const Policy& pol = cfg.policy0;
  const ClosedLoopMoments clm = closed_loop_moments(pr.system, pr.moments, pol);
  Rng rng(123);
  Vector x = clm.xbar;
  Vector s = Vector::Zero(2);
  Matrix s2 = Matrix::Zero(2, 2);
  const long N = 1000000;
  for (long t = 0; t < N; ++t) {
    x = plant.step(x, pol, rng).x_next;
    s += x;
    s2 += x * x.transpose();
  }
  const Vector mean = s / N;
  const Matrix cov = s2 / N - mean * mean.transpose();
  EXPECT_LT((mean - clm.xbar).norm() / clm.xbar.norm(), 0.05);
  EXPECT_LT((cov - clm.Sigma.matrix()).norm() / clm.Sigma.matrix().norm(), 0.05);
}

TEST(PlantStep, SeedDeterminismOfTrajectories) {
  const RunConfig& cfg = config("four_state");
  const Plant plant(cfg.system, cfg.noise);
  Rng a(5);
  Rng b(5);
  Vector xa = Vector::Zero(4);
  Vector xb = Vector::Zero(4);
  for (int t = 0; t < 10000; ++t) {
    xa = plant.step(xa, cfg.policy0, a).x_next;
    xb = plant.step(xb, cfg.policy0, b).x_next;
    ASSERT_EQ(xa, xb);
  }
}

TEST(ClosedLoopMoments, ScalarExample) {
  const Problem pr = scalar_problem();
  const ClosedLoopMoments clm = closed_loop_moments(pr.system, pr.moments, scalar_policy(0, 0, 0));
  EXPECT_EQ(clm.xbar(0), 0.0);
  EXPECT_NEAR(clm.Sigma(0, 0), 4.0 / 3.0, 1e-12);
}

TEST(ClosedLoopMoments, ZeroForcingGivesZeroMean) {
  std::mt19937_64 g(4);
  const Problem& base = problem("two_state");
  Problem pr = base;
  pr.moments.wbar.setZero();
  for (int i = 0; i < 10; ++i) {
    Policy p = random_stabilizing(pr.system, config("two_state").policy0, 0.3, 0.05, g);
    p.b.setZero();
    EXPECT_LT(closed_loop_moments(pr.system, pr.moments, p).xbar.norm(), 1e-14);
  }
}

TEST(ClosedLoopMoments, ExplorationIncreasesCovariance) {
  const Problem& pr = problem("four_state");
  Policy p = config("four_state").policy0;
  p.sigma = 0.0;
  const double t0 = closed_loop_moments(pr.system, pr.moments, p).Sigma.matrix().trace();
  p.sigma = 0.5;
  const double t1 = closed_loop_moments(pr.system, pr.moments, p).Sigma.matrix().trace();
  EXPECT_GT(t1, t0);
}

TEST(ClosedLoopMoments, ResidualsAndPositiveDefinite) {
  const Problem& pr = problem("two_state");
  const Policy& p = config("two_state").policy0;
  const ClosedLoopMoments clm = closed_loop_moments(pr.system, pr.moments, p);
  const Matrix F = pr.system.closed_loop(p.K);
  const Matrix S = clm.Sigma.matrix();
  EXPECT_LE((S - clm.PsiZeta.matrix() - F * S * F.transpose()).norm(), 1e-10 * S.norm());
  EXPECT_LE((clm.xbar - F * clm.xbar - pr.system.B * p.b - pr.moments.wbar).norm(), 1e-10 * (1 + clm.xbar.norm()));
  EXPECT_GT(min_eigenvalue(clm.Sigma), 0.0);
}

TEST(ClosedLoopMoments, UnstablePolicyThrows) {
  const Problem& pr = problem("four_state");
  EXPECT_THROW(closed_loop_moments(pr.system, pr.moments, Policy(Matrix::Zero(2, 4), Vector::Zero(2), 0.5)),
               InstabilityError);
}
