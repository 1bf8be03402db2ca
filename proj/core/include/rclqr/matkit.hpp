#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace rclqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kLyapunovTolerance = 1e-12;
inline constexpr int kLyapunovMaxIterations = 200;
inline constexpr double kLyapunovResidualBound = 1e-10;

// Square matrix with M(i,j) == M(j,i). Construction from raw data checks
// symmetry to kSymmetryTolerance (scaled by the largest entry) and then
// stores the exact symmetric part.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m, double tol = kSymmetryTolerance);

  // Skips the check. For results of arithmetic that is symmetric in exact math.
  static SymMatrix symmetrize(const Matrix& m);
  static SymMatrix identity(Index d);
  static SymMatrix zero(Index d);

  const Matrix& matrix() const { return m_; }
  operator const Matrix&() const { return m_; }
  Index dim() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

// svec of a d x d symmetric matrix, length d(d+1)/2.
class SvecVector {
 public:
  SvecVector() = default;
  SvecVector(Vector entries, Index dim);

  const Vector& entries() const { return v_; }
  Index dim() const { return d_; }
  Index size() const { return v_.size(); }

 private:
  Vector v_;
  Index d_ = 0;
};

constexpr Index svec_length(Index d) { return d * (d + 1) / 2; }

// Inverse of svec_length; returns -1 when len is not triangular.
Index svec_dim_for_length(Index len);

// Row-major upper triangle, off-diagonals scaled by sqrt(2).
SvecVector svec(const SymMatrix& m);
void svec_into(const Matrix& m, double* out);

SymMatrix smat(const SvecVector& v);
SymMatrix smat(const Vector& v);

double spectral_radius(const Matrix& f);

// Unique P with P = C + F^T P F. Throws InstabilityError when rho(F) >= 1.
SymMatrix solve_discrete_lyapunov(const Matrix& f, const SymMatrix& c,
                                  double tol = kLyapunovTolerance,
                                  int max_iterations = kLyapunovMaxIterations);

double lyapunov_residual(const Matrix& f, const SymMatrix& c, const SymMatrix& p);

Matrix project_box(const Matrix& x, double lo, double hi);

double min_eigenvalue(const SymMatrix& m);

bool all_finite(const Matrix& m);

}  // namespace rclqr
