#include "rclqr/matkit.hpp"

#include "rclqr/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace rclqr {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument(std::string(what) + ": matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected square");
  }
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& m, double tol) {
  require_square(m, "SymMatrix");
  if (!all_finite(m)) throw InvalidArgument("SymMatrix: non-finite entry");
  const double scale = m.size() > 0 ? std::max(1.0, m.cwiseAbs().maxCoeff()) : 1.0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = i + 1; j < m.cols(); ++j) {
      if (std::abs(m(i, j) - m(j, i)) > tol * scale) {
        throw InvalidArgument("SymMatrix: entries (" + std::to_string(i) + "," + std::to_string(j) +
                              ") and transpose differ beyond tolerance");
      }
    }
  }
  m_ = 0.5 * (m + m.transpose());
}

SymMatrix SymMatrix::symmetrize(const Matrix& m) {
  require_square(m, "SymMatrix::symmetrize");
  SymMatrix s;
  s.m_ = 0.5 * (m + m.transpose());
  return s;
}

SymMatrix SymMatrix::identity(Index d) { return symmetrize(Matrix::Identity(d, d)); }

SymMatrix SymMatrix::zero(Index d) { return symmetrize(Matrix::Zero(d, d)); }

SvecVector::SvecVector(Vector entries, Index dim) : v_(std::move(entries)), d_(dim) {
  if (dim <= 0) throw InvalidArgument("SvecVector: dimension must be positive");
  if (v_.size() != svec_length(dim)) {
    throw InvalidArgument("SvecVector: length " + std::to_string(v_.size()) + " does not match d=" +
                          std::to_string(dim));
  }
}

Index svec_dim_for_length(Index len) {
  if (len <= 0) return -1;
  auto d = static_cast<Index>(std::llround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
  return svec_length(d) == len ? d : -1;
}

void svec_into(const Matrix& m, double* out) {
  const Index d = m.rows();
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    out[k++] = m(i, i);
    for (Index j = i + 1; j < d; ++j) out[k++] = kSqrt2 * m(i, j);
  }
}

SvecVector svec(const SymMatrix& m) {
  if (m.dim() == 0) throw InvalidArgument("svec: empty matrix");
  Vector v(svec_length(m.dim()));
  svec_into(m.matrix(), v.data());
  return SvecVector(std::move(v), m.dim());
}

SymMatrix smat(const SvecVector& v) {
  const Index d = v.dim();
  Matrix m(d, d);
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    m(i, i) = v.entries()(k++);
    for (Index j = i + 1; j < d; ++j) {
      const double x = v.entries()(k++) / kSqrt2;
      m(i, j) = x;
      m(j, i) = x;
    }
  }
  return SymMatrix::symmetrize(m);
}

SymMatrix smat(const Vector& v) {
  const Index d = svec_dim_for_length(v.size());
  if (d < 0) {
    throw InvalidArgument("smat: length " + std::to_string(v.size()) + " is not a triangular number");
  }
  return smat(SvecVector(v, d));
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double spectral_radius(const Matrix& f) {
  require_square(f, "spectral_radius");
  if (!all_finite(f)) throw InvalidArgument("spectral_radius: non-finite entry");
  if (f.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(f, false);
  if (es.info() != Eigen::Success) throw NumericError("spectral_radius: eigenvalue iteration failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SymMatrix solve_discrete_lyapunov(const Matrix& f, const SymMatrix& c, double tol, int max_iterations) {
  require_square(f, "solve_discrete_lyapunov");
  if (f.rows() != c.dim()) throw InvalidArgument("solve_discrete_lyapunov: F and C dimensions differ");
  const double rho = spectral_radius(f);
  if (rho >= 1.0) {
    throw InstabilityError("solve_discrete_lyapunov: spectral radius " + std::to_string(rho) + " >= 1");
  }

  // After k rounds P holds sum_{j < 2^k} (F^T)^j C F^j and G = F^(2^k).
  Matrix p = c.matrix();
  Matrix g = f;
  Matrix delta;
  bool converged = false;
  for (int it = 0; it < max_iterations; ++it) {
    delta.noalias() = g.transpose() * p * g;
    p += delta;
    if (delta.norm() <= tol * (1.0 + p.norm())) {
      converged = true;
      break;
    }
    g = g * g;
    if (!g.allFinite() || !p.allFinite()) break;
  }
  if (!converged) throw NumericError("solve_discrete_lyapunov: no convergence within iteration budget");

  SymMatrix out = SymMatrix::symmetrize(p);
  const double res = lyapunov_residual(f, c, out);
  if (!(res <= kLyapunovResidualBound * (1.0 + out.matrix().norm()))) {
    throw NumericError("solve_discrete_lyapunov: residual " + std::to_string(res) + " above bound");
  }
  return out;
}

double lyapunov_residual(const Matrix& f, const SymMatrix& c, const SymMatrix& p) {
  return (p.matrix() - c.matrix() - f.transpose() * p.matrix() * f).norm();
}

Matrix project_box(const Matrix& x, double lo, double hi) {
  if (!(lo < hi)) throw InvalidArgument("project_box: lower bound must be below upper bound");
  return x.cwiseMax(lo).cwiseMin(hi);
}

double min_eigenvalue(const SymMatrix& m) {
  if (m.dim() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace rclqr
