#include "rclqr/errors.hpp"
#include "rclqr/matkit.hpp"
#include "support/fixtures.hpp"
#include "support/reference_math.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rclqr;
using namespace rclqr::testing;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(SymMatrix, RejectsAsymmetricAndNonSquare) {
  EXPECT_THROW(SymMatrix(mat({{1, 2}, {2.1, 3}})), InvalidArgument);
  EXPECT_THROW(SymMatrix(Matrix(2, 3)), InvalidArgument);
  EXPECT_NO_THROW(SymMatrix(mat({{1, 2}, {2 + 1e-14, 3}})));
}

TEST(Svec, TwoByTwoExample) {
  const SvecVector v = svec(SymMatrix(mat({{1, 2}, {2, 3}})));
  ASSERT_EQ(v.size(), 3);
  EXPECT_DOUBLE_EQ(v.entries()(0), 1.0);
  EXPECT_DOUBLE_EQ(v.entries()(1), 2.0 * std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(v.entries()(2), 3.0);
}

TEST(Svec, IdentityAndLength) {
  const SvecVector v = svec(SymMatrix::identity(2));
  EXPECT_EQ(v.entries(), (Vector(3) << 1, 0, 1).finished());
  EXPECT_EQ(svec(SymMatrix::identity(6)).size(), 21);
}

TEST(Svec, RowMajorUpperTriangleOrder) {
  const SvecVector v = svec(SymMatrix(mat({{1, 2, 3}, {2, 4, 5}, {3, 5, 6}})));
  const double r = std::sqrt(2.0);
  EXPECT_TRUE(v.entries().isApprox((Vector(6) << 1, 2 * r, 3 * r, 4, 5 * r, 6).finished()));
}

TEST(Smat, InverseExamples) {
  const double r = std::sqrt(2.0);
  EXPECT_TRUE(smat(Vector((Vector(3) << 1, 2 * r, 3).finished())).matrix().isApprox(mat({{1, 2}, {2, 3}})));
  EXPECT_EQ(smat(Vector((Vector(3) << 1, 0, 1).finished())).matrix(), Matrix::Identity(2, 2));
}

TEST(Smat, RejectsNonTriangularLength) {
  EXPECT_THROW(smat(Vector(Vector::Zero(4))), InvalidArgument);
  EXPECT_THROW(SvecVector(Vector::Zero(4), 2), InvalidArgument);
}

TEST(Svec, IsometryAndRoundTripProperty) {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = 1 + trial % 8;
    const Matrix A = random_symmetric(d, g);
    const Matrix B = random_symmetric(d, g);
    const double ip = svec(SymMatrix(A)).entries().dot(svec(SymMatrix(B)).entries());
    EXPECT_LE(std::abs(ip - (A.transpose() * B).trace()), 1e-12 * (1 + A.norm() * B.norm()));
    EXPECT_LE((smat(svec(SymMatrix(A))).matrix() - A).cwiseAbs().maxCoeff(), 1e-14 * (1 + A.cwiseAbs().maxCoeff()));
    const Vector v = random_vector(svec_length(d), g);
    EXPECT_LE((svec(smat(v)).entries() - v).cwiseAbs().maxCoeff(), 1e-14 * (1 + v.cwiseAbs().maxCoeff()));
  }
}

TEST(Lyapunov, ScalarGeometricSeries) {
  const SymMatrix P = solve_discrete_lyapunov(Matrix::Constant(1, 1, 0.5), SymMatrix(Matrix::Constant(1, 1, 1.0)));
  EXPECT_NEAR(P(0, 0), 4.0 / 3.0, 1e-12);
}

TEST(Lyapunov, ZeroDynamicsReturnsC) {
  const Matrix Q = mat({{2, 1}, {1, 3}});
  EXPECT_TRUE(solve_discrete_lyapunov(Matrix::Zero(2, 2), SymMatrix(Q)).matrix().isApprox(Q));
}

TEST(Lyapunov, AgreesWithKroneckerSolveAndIsPsd) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 1 + trial % 6;
    const Matrix F = random_stable(n, 0.3 + 0.02 * trial, g);
    const Matrix L = random_matrix(n, n, g);
    const SymMatrix C = SymMatrix::symmetrize(L * L.transpose());
    const SymMatrix P = solve_discrete_lyapunov(F, C);
    const Matrix Pk = kron_lyapunov(F, C.matrix());
    EXPECT_LE((P.matrix() - Pk).norm(), 1e-9 * (1 + Pk.norm()));
    EXPECT_LE(lyapunov_residual(F, C, P), 1e-10 * (1 + P.matrix().norm()));
    EXPECT_GE(min_eigenvalue(P), -1e-9);
  }
}

TEST(Lyapunov, ClosedLoopOfFourStateSystem) {
  const Problem& pr = problem("four_state");
  const Policy& p0 = config("four_state").policy0;
  const Matrix F = pr.system.closed_loop(p0.K);
  const SymMatrix C = SymMatrix::symmetrize(pr.cost.Q.matrix() + p0.K.transpose() * pr.cost.R.matrix() * p0.K);
  const SymMatrix P = solve_discrete_lyapunov(F, C);
  EXPECT_LE(lyapunov_residual(F, C, P), 1e-10 * (1 + P.matrix().norm()));
}

TEST(Lyapunov, UnstableThrows) {
  EXPECT_THROW(solve_discrete_lyapunov(Matrix::Constant(1, 1, 1.0), SymMatrix::identity(1)), InstabilityError);
  EXPECT_THROW(solve_discrete_lyapunov(mat({{0.5, 0}, {0, -1.2}}), SymMatrix::identity(2)), InstabilityError);
}

TEST(Lyapunov, IterationBudgetExhaustedIsNumericError) {
  EXPECT_THROW(solve_discrete_lyapunov(Matrix::Constant(1, 1, 0.999), SymMatrix::identity(1), 1e-12, 2), NumericError);
}

TEST(SpectralRadius, Examples) {
  EXPECT_NEAR(spectral_radius(config("four_state").system.A), 1.0, 1e-9);
  EXPECT_EQ(spectral_radius(Matrix::Zero(3, 3)), 0.0);
  EXPECT_NEAR(spectral_radius(mat({{0.3, 0}, {0, -0.8}})), 0.8, 1e-12);
  EXPECT_NEAR(spectral_radius(mat({{0, -0.5}, {0.5, 0}})), 0.5, 1e-12);
}

TEST(SpectralRadius, RejectsNonFinite) {
  EXPECT_THROW(spectral_radius(mat({{NAN, 0}, {0, 1}})), InvalidArgument);
  EXPECT_THROW(spectral_radius(mat({{INFINITY, 0}, {0, 1}})), InvalidArgument);
}

TEST(ProjectBox, ClampsAndIsIdempotent) {
  const Matrix X = mat({{1, -2, 12.5}});
  const Matrix P = project_box(X, -10, 10);
  EXPECT_EQ(P, mat({{1, -2, 10}}));
  EXPECT_EQ(project_box(P, -10, 10), P);
  EXPECT_EQ(project_box(mat({{0.5, -0.5}}), -10, 10), mat({{0.5, -0.5}}));
  EXPECT_THROW(project_box(X, 1, 1), InvalidArgument);
  EXPECT_THROW(project_box(X, 2, 1), InvalidArgument);
}

TEST(ProjectBox, NonexpansiveProperty) {
  std::mt19937_64 g(3);
  for (int i = 0; i < 500; ++i) {
    const Matrix X = random_matrix(2, 5, g, 10);
    const Matrix Y = random_matrix(2, 5, g, 10);
    EXPECT_LE((project_box(X, -3, 4) - project_box(Y, -3, 4)).norm(), (X - Y).norm() + 1e-15);
  }
}
