#pragma once

#include "rclqr/errors.hpp"
#include "rclqr/matkit.hpp"
#include "rclqr/plant.hpp"

#include <string>

namespace rclqr {

struct CostSpec {
  SymMatrix Q;
  SymMatrix R;
  double iota = 0.0;
};

// Everything the model-based oracle needs. The learner never sees `system`.
struct Problem {
  SystemModel system;
  CostSpec cost;
  NoiseMoments moments;

  Problem() = default;
  Problem(SystemModel sys, CostSpec c, NoiseMoments nm);

  Index n() const { return system.n(); }
  Index m() const { return system.m(); }
};

double bar_iota(const CostSpec& cost, const NoiseMoments& moments);

struct LagrangianParams {
  SymMatrix Qmu;
  Vector S;
  double mu = 0.0;
  double bar_iota = 0.0;
};

LagrangianParams lagrangian_params(const CostSpec& cost, const NoiseMoments& moments, double mu);

// x^T Qmu x + 2 x^T S + u^T R u - mu * bar_iota
double stage_cost(const LagrangianParams& lp, const SymMatrix& R, const Vector& x, const Vector& u);

struct ValueParams {
  SymMatrix P;
  Vector g;
  double z1 = 0.0;
};

struct QParams {
  SymMatrix Upsilon;
  Vector p;
  Vector q;
  double z2 = 0.0;

  Matrix U11() const;
  Matrix U12() const;
  Matrix U21() const;
  Matrix U22() const;
};

struct GradientParts {
  Matrix E;
  Vector G;
  Matrix H;
  SymMatrix Phi;
  Matrix grad;
};

ValueParams value_params(const Problem& pr, const Policy& policy, double mu);
QParams q_params(const Problem& pr, const Policy& policy, double mu);
double lagrangian_value(const Problem& pr, const Policy& policy, double mu);
double constraint_value(const Problem& pr, const Policy& policy);
// Average cost J(X), the Lagrangian at mu = 0.
double average_cost(const Problem& pr, const Policy& policy);
SymMatrix phi_matrix(const ClosedLoopMoments& clm);
GradientParts exact_gradient(const Problem& pr, const Policy& policy, double mu);

// Differential value V(x) and action value Q(x,u) from the closed-form parameters.
double value_at(const ValueParams& vp, const Vector& x);
double action_value_at(const QParams& qp, const Vector& x, const Vector& u);

struct KktCertificate {
  double grad_norm = 0.0;
  double complementary_slackness = 0.0;
  double primal_infeasibility = 0.0;
  double mu = 0.0;
  double Jc = 0.0;
  double bar_iota = 0.0;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, KktCertificate cert) : Error(what), certificate_(cert) {}
  const KktCertificate& certificate() const { return certificate_; }

 private:
  KktCertificate certificate_;
};

struct SolverConfig {
  double tol_inner = 1e-8;
  double tol_outer = 1e-6;
  int max_inner_iterations = 200;
  int max_outer_iterations = 200;
  double mu_max = 1e8;
};

struct ReferenceSolution {
  Policy policy;
  double mu = 0.0;
  double L = 0.0;
  double J = 0.0;
  double Jc = 0.0;
  double bar_iota = 0.0;
  KktCertificate certificate;
  int inner_iterations = 0;
  int outer_iterations = 0;
};

// Minimizer of L(., mu) over stabilizing X, started from a stabilizing K.
Policy minimize_lagrangian(const Problem& pr, const Policy& start, double mu, const SolverConfig& cfg,
                           int* iterations = nullptr);

// Primal-dual pair (X*, mu*) of the constrained problem. `start` must be
// stabilizing; its sigma is kept fixed.
ReferenceSolution solve_reference(const Problem& pr, const Policy& start, const SolverConfig& cfg = {});

KktCertificate kkt_certificate(const Problem& pr, const Policy& policy, double mu);

}  // namespace rclqr
