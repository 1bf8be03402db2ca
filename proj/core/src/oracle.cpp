#include "rclqr/oracle.hpp"

#include <cmath>
#include <string>

namespace rclqr {

namespace {

void check_policy_shape(const Problem& pr, const Policy& policy) {
  if (policy.K.rows() != pr.m() || policy.K.cols() != pr.n() || policy.b.size() != pr.m()) {
    throw InvalidArgument("policy shape does not match the system (expected K " + std::to_string(pr.m()) + "x" +
                          std::to_string(pr.n()) + ")");
  }
}

void check_mu(double mu) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidArgument("multiplier mu must be finite and >= 0");
}

// Shared pieces of the closed-form evaluation for one (X, mu).
struct Evaluation {
  LagrangianParams lp;
  Matrix F;
  SymMatrix Qk;  // Qmu + K^T R K
  ClosedLoopMoments clm;
  ValueParams vp;
  double L = 0.0;
};

double lagrangian_from(const Problem& pr, const Policy& pol, const LagrangianParams& lp, const SymMatrix& Qk,
                       const ClosedLoopMoments& clm) {
  const Matrix& R = pr.cost.R.matrix();
  const Vector& xb = clm.xbar;
  const Vector lin = lp.S - pol.K.transpose() * (R * pol.b);
  return (Qk.matrix() * clm.Sigma.matrix()).trace() + xb.dot(Qk.matrix() * xb) + 2.0 * xb.dot(lin) +
         pol.sigma * pol.sigma * R.trace() + pol.b.dot(R * pol.b) - lp.mu * lp.bar_iota;
}

Evaluation evaluate(const Problem& pr, const Policy& pol, double mu) {
  check_policy_shape(pr, pol);
  check_mu(mu);
  Evaluation ev;
  ev.lp = lagrangian_params(pr.cost, pr.moments, mu);
  const Matrix& A = pr.system.A;
  const Matrix& B = pr.system.B;
  const Matrix& R = pr.cost.R.matrix();
  const Index n = pr.n();
  ev.F = A - B * pol.K;
  ev.Qk = SymMatrix::symmetrize(ev.lp.Qmu.matrix() + pol.K.transpose() * R * pol.K);
  ev.clm = closed_loop_moments(pr.system, pr.moments, pol);
  ev.vp.P = solve_discrete_lyapunov(ev.F, ev.Qk);
  const Matrix& P = ev.vp.P.matrix();
  const Vector rhs = ev.lp.S - pol.K.transpose() * (R * pol.b) + ev.F.transpose() * (P * (B * pol.b + pr.moments.wbar));
  ev.vp.g = 2.0 * (Matrix::Identity(n, n) - ev.F).transpose().partialPivLu().solve(rhs);
  const Vector& xb = ev.clm.xbar;
  ev.vp.z1 = -(P * ev.clm.Sigma.matrix()).trace() - xb.dot(P * xb) - ev.vp.g.dot(xb);
  ev.L = lagrangian_from(pr, pol, ev.lp, ev.Qk, ev.clm);
  return ev;
}

QParams q_params_from(const Problem& pr, const Evaluation& ev) {
  const Matrix& A = pr.system.A;
  const Matrix& B = pr.system.B;
  const Matrix& P = ev.vp.P.matrix();
  const Vector& wbar = pr.moments.wbar;
  const Index n = pr.n();
  const Index m = pr.m();
  Matrix U(n + m, n + m);
  U.topLeftCorner(n, n) = ev.lp.Qmu.matrix() + A.transpose() * P * A;
  U.topRightCorner(n, m) = A.transpose() * P * B;
  U.bottomLeftCorner(m, n) = B.transpose() * P * A;
  U.bottomRightCorner(m, m) = pr.cost.R.matrix() + B.transpose() * P * B;
  QParams qp;
  qp.Upsilon = SymMatrix::symmetrize(U);
  qp.p = ev.lp.S + A.transpose() * (P * wbar) + 0.5 * A.transpose() * ev.vp.g;
  qp.q = B.transpose() * (P * wbar) + 0.5 * B.transpose() * ev.vp.g;
  qp.z2 = -ev.L - ev.lp.mu * ev.lp.bar_iota + ev.vp.z1 + ev.vp.g.dot(wbar) + wbar.dot(P * wbar) +
          (P * pr.moments.W.matrix()).trace();
  return qp;
}

double constraint_from(const Problem& pr, const ClosedLoopMoments& clm) {
  const Matrix& Q = pr.cost.Q.matrix();
  const Matrix QWQ = Q * pr.moments.W.matrix() * Q;
  const Vector& xb = clm.xbar;
  return 4.0 * (QWQ * clm.Sigma.matrix()).trace() + 4.0 * xb.dot(QWQ * xb) + 4.0 * xb.dot(Q * pr.moments.M3);
}

GradientParts gradient_from(const Problem& pr, const Policy& pol, const Evaluation& ev) {
  const QParams qp = q_params_from(pr, ev);
  GradientParts gp;
  const Matrix U22 = qp.U22();
  gp.E = U22 * pol.K - qp.U21();
  gp.G = U22 * pol.b + qp.q;
  gp.H.resize(pr.m(), pr.n() + 1);
  gp.H << gp.E, gp.G;
  gp.Phi = phi_matrix(ev.clm);
  gp.grad = 2.0 * gp.H * gp.Phi.matrix();
  return gp;
}

}  // namespace

Problem::Problem(SystemModel sys, CostSpec c, NoiseMoments nm)
    : system(std::move(sys)), cost(std::move(c)), moments(std::move(nm)) {
  const Index n = system.n();
  const Index m = system.m();
  if (cost.Q.dim() != n) throw InvalidArgument("cost: Q must be " + std::to_string(n) + "x" + std::to_string(n));
  if (cost.R.dim() != m) throw InvalidArgument("cost: R must be " + std::to_string(m) + "x" + std::to_string(m));
  if (moments.wbar.size() != n || moments.W.dim() != n || moments.M3.size() != n) {
    throw InvalidArgument("noise moments do not match the state dimension");
  }
  if (min_eigenvalue(cost.R) <= 0.0) throw InvalidArgument("cost: R must be positive definite");
  if (min_eigenvalue(cost.Q) < -kPositiveDefiniteFloor) throw InvalidArgument("cost: Q must be positive semidefinite");
}

double bar_iota(const CostSpec& cost, const NoiseMoments& moments) {
  const Matrix WQ = moments.W.matrix() * cost.Q.matrix();
  return cost.iota - moments.m4 + 4.0 * (WQ * WQ).trace();
}

LagrangianParams lagrangian_params(const CostSpec& cost, const NoiseMoments& moments, double mu) {
  check_mu(mu);
  const Matrix& Q = cost.Q.matrix();
  LagrangianParams lp;
  lp.mu = mu;
  lp.Qmu = SymMatrix::symmetrize(Q + 4.0 * mu * Q * moments.W.matrix() * Q);
  lp.S = 2.0 * mu * Q * moments.M3;
  lp.bar_iota = bar_iota(cost, moments);
  return lp;
}

double stage_cost(const LagrangianParams& lp, const SymMatrix& R, const Vector& x, const Vector& u) {
  if (x.size() != lp.Qmu.dim() || u.size() != R.dim()) throw InvalidArgument("stage_cost: dimension mismatch");
  return x.dot(lp.Qmu.matrix() * x) + 2.0 * x.dot(lp.S) + u.dot(R.matrix() * u) - lp.mu * lp.bar_iota;
}

Matrix QParams::U11() const {
  const Index n = p.size();
  return Upsilon.matrix().topLeftCorner(n, n);
}
Matrix QParams::U12() const { return Upsilon.matrix().topRightCorner(p.size(), q.size()); }
Matrix QParams::U21() const { return Upsilon.matrix().bottomLeftCorner(q.size(), p.size()); }
Matrix QParams::U22() const { return Upsilon.matrix().bottomRightCorner(q.size(), q.size()); }

ValueParams value_params(const Problem& pr, const Policy& policy, double mu) { return evaluate(pr, policy, mu).vp; }

QParams q_params(const Problem& pr, const Policy& policy, double mu) {
  return q_params_from(pr, evaluate(pr, policy, mu));
}

double lagrangian_value(const Problem& pr, const Policy& policy, double mu) {
  check_policy_shape(pr, policy);
  const LagrangianParams lp = lagrangian_params(pr.cost, pr.moments, mu);
  const ClosedLoopMoments clm = closed_loop_moments(pr.system, pr.moments, policy);
  const SymMatrix Qk =
      SymMatrix::symmetrize(lp.Qmu.matrix() + policy.K.transpose() * pr.cost.R.matrix() * policy.K);
  return lagrangian_from(pr, policy, lp, Qk, clm);
}

double average_cost(const Problem& pr, const Policy& policy) { return lagrangian_value(pr, policy, 0.0); }

double constraint_value(const Problem& pr, const Policy& policy) {
  check_policy_shape(pr, policy);
  return constraint_from(pr, closed_loop_moments(pr.system, pr.moments, policy));
}

SymMatrix phi_matrix(const ClosedLoopMoments& clm) {
  const Index n = clm.xbar.size();
  Matrix phi(n + 1, n + 1);
  phi.topLeftCorner(n, n) = clm.Sigma.matrix() + clm.xbar * clm.xbar.transpose();
  phi.topRightCorner(n, 1) = -clm.xbar;
  phi.bottomLeftCorner(1, n) = -clm.xbar.transpose();
  phi(n, n) = 1.0;
  return SymMatrix::symmetrize(phi);
}

GradientParts exact_gradient(const Problem& pr, const Policy& policy, double mu) {
  return gradient_from(pr, policy, evaluate(pr, policy, mu));
}

double value_at(const ValueParams& vp, const Vector& x) { return x.dot(vp.P.matrix() * x) + vp.g.dot(x) + vp.z1; }

double action_value_at(const QParams& qp, const Vector& x, const Vector& u) {
  Vector xu(x.size() + u.size());
  xu << x, u;
  return xu.dot(qp.Upsilon.matrix() * xu) + 2.0 * qp.p.dot(x) + 2.0 * qp.q.dot(u) + qp.z2;
}

KktCertificate kkt_certificate(const Problem& pr, const Policy& policy, double mu) {
  const Evaluation ev = evaluate(pr, policy, mu);
  KktCertificate c;
  c.mu = mu;
  c.bar_iota = ev.lp.bar_iota;
  c.Jc = constraint_from(pr, ev.clm);
  c.grad_norm = gradient_from(pr, policy, ev).grad.norm();
  c.complementary_slackness = std::abs(mu * (c.Jc - c.bar_iota));
  c.primal_infeasibility = std::max(0.0, c.Jc - c.bar_iota);
  return c;
}

Policy minimize_lagrangian(const Problem& pr, const Policy& start, double mu, const SolverConfig& cfg,
                           int* iterations) {
  check_policy_shape(pr, start);
  check_mu(mu);
  if (!is_stabilizing(pr.system, start.K)) {
    throw InstabilityError("minimize_lagrangian: starting policy is not stabilizing");
  }
  const Matrix& A = pr.system.A;
  const Matrix& B = pr.system.B;
  const Matrix& R = pr.cost.R.matrix();
  const LagrangianParams lp = lagrangian_params(pr.cost, pr.moments, mu);
  const Index m = pr.m();

  // Policy iteration on K. E = U22 K - U21 does not involve b.
  Matrix K = start.K;
  int it = 0;
  for (; it < cfg.max_inner_iterations; ++it) {
    const Matrix F = A - B * K;
    const SymMatrix P = solve_discrete_lyapunov(F, SymMatrix::symmetrize(lp.Qmu.matrix() + K.transpose() * R * K));
    const Matrix U22 = R + B.transpose() * P.matrix() * B;
    const Matrix Knew = U22.ldlt().solve(B.transpose() * P.matrix() * A);
    const double step = (Knew - K).norm();
    K = Knew;
    if (step <= 1e-14 * (1.0 + K.norm())) break;
  }
  if (iterations) *iterations = it + 1;

  // The gradient scales with Qmu, so the tolerance does too once mu is large.
  const double tol = cfg.tol_inner * std::max(1.0, lp.Qmu.matrix().norm() / std::max(1e-300, pr.cost.Q.matrix().norm()));

  // G is affine in b, so a secant solve with m + 1 evaluations is exact.
  Policy pol(K, Vector::Zero(m), start.sigma);
  for (int refine = 0; refine < 3; ++refine) {
    const Vector G0 = exact_gradient(pr, pol, mu).G;
    Matrix J(m, m);
    for (Index j = 0; j < m; ++j) {
      Policy pj = pol;
      pj.b(j) += 1.0;
      J.col(j) = exact_gradient(pr, pj, mu).G - G0;
    }
    pol.b -= J.partialPivLu().solve(G0);
    if (exact_gradient(pr, pol, mu).grad.norm() < tol) return pol;
  }
  const KktCertificate cert = kkt_certificate(pr, pol, mu);
  throw SolverError("inner minimization did not reach tol_inner (gradient norm " + std::to_string(cert.grad_norm) + ")",
                    cert);
}

ReferenceSolution solve_reference(const Problem& pr, const Policy& start, const SolverConfig& cfg) {
  ReferenceSolution out;
  out.bar_iota = bar_iota(pr.cost, pr.moments);
  const double ib = out.bar_iota;

  auto finish = [&](const Policy& pol, double mu) {
    out.policy = pol;
    out.mu = mu;
    out.certificate = kkt_certificate(pr, pol, mu);
    out.Jc = out.certificate.Jc;
    out.L = lagrangian_value(pr, pol, mu);
    out.J = average_cost(pr, pol);
    return out;
  };

  int inner = 0;
  const Policy x0 = minimize_lagrangian(pr, start, 0.0, cfg, &inner);
  out.inner_iterations += inner;
  ++out.outer_iterations;
  if (constraint_value(pr, x0) <= ib) return finish(x0, 0.0);

  // J_c(X_mu) is nonincreasing in mu: bracket the crossing, then bisect.
  double lo = 0.0;
  double hi = 1.0;
  Policy x_hi = minimize_lagrangian(pr, x0, hi, cfg, &inner);
  out.inner_iterations += inner;
  while (constraint_value(pr, x_hi) > ib) {
    ++out.outer_iterations;
    lo = hi;
    hi *= 4.0;
    if (hi > cfg.mu_max) {
      const KktCertificate cert = kkt_certificate(pr, x_hi, lo);
      throw SolverError("constraint cannot be satisfied: J_c(X_mu) = " + std::to_string(cert.Jc) +
                            " exceeds bar_iota = " + std::to_string(ib) + " at mu = " + std::to_string(lo),
                        cert);
    }
    x_hi = minimize_lagrangian(pr, x_hi, hi, cfg, &inner);
    out.inner_iterations += inner;
  }

  for (int it = 0; it < cfg.max_outer_iterations; ++it) {
    ++out.outer_iterations;
    const double slack = hi * (ib - constraint_value(pr, x_hi));
    if (slack <= cfg.tol_outer) return finish(x_hi, hi);
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) break;
    const Policy x_mid = minimize_lagrangian(pr, x_hi, mid, cfg, &inner);
    out.inner_iterations += inner;
    if (constraint_value(pr, x_mid) > ib) {
      lo = mid;
    } else {
      hi = mid;
      x_hi = x_mid;
    }
  }
  const KktCertificate cert = kkt_certificate(pr, x_hi, hi);
  if (cert.complementary_slackness <= cfg.tol_outer) return finish(x_hi, hi);
  throw SolverError("dual bisection did not reach tol_outer", cert);
}

}  // namespace rclqr
