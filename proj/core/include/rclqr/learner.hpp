#pragma once

#include "rclqr/matkit.hpp"
#include "rclqr/oracle.hpp"
#include "rclqr/plant.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rclqr {

inline constexpr long kDefaultWarmup = 500;
inline constexpr long kDefaultRecordEvery = 100;
inline constexpr double kDefaultBoxBound = 10.0;
inline constexpr double kDefaultBlowupThreshold = 1e8;

// alpha_t = a0/(1+t)^ea, beta_t = b0/(1+t)^eb, gamma_t = c0/(1+t)^ec.
struct StepSchedule {
  double a0 = 0.5;
  double b0 = 0.1;
  double c0 = 0.05;
  double ea = 0.55;
  double eb = 0.7;
  double ec = 0.95;

  // Requires positive scales and 0.5 < ea < eb < ec <= 1.
  void validate() const;
  double alpha(long t) const;
  double beta(long t) const;
  double gamma(long t) const;
};

Index feature_length(Index n, Index m);
// [svec((x;u)(x;u)^T); 2x; 2u]
Vector feature(const Vector& x, const Vector& u);
void feature_into(const Vector& x, const Vector& u, Vector& z, Vector& out);

// theta = [svec(Upsilon); p; q]
class CriticParams {
 public:
  CriticParams() = default;
  CriticParams(Index n, Index m);
  CriticParams(Vector theta, Index n, Index m);
  static CriticParams from_q_params(const QParams& qp);

  const Vector& theta() const { return theta_; }
  Vector& theta() { return theta_; }
  Index n() const { return n_; }
  Index m() const { return m_; }

  SymMatrix upsilon() const;
  Vector p() const;
  Vector q() const;

 private:
  Vector theta_;
  Index n_ = 0;
  Index m_ = 0;
};

struct Trackers {
  double L_hat = 0.0;
  SymMatrix Phi_hat;
  double Jc_hat = 0.0;

  static Trackers initial(Index n);
};

// Cost-side constants available to the learner. The plant matrices are not.
struct CostModel {
  SymMatrix Q;
  SymMatrix R;
  Matrix QWQ;
  Vector QM3;
  double bar_iota = 0.0;

  static CostModel from(const CostSpec& cost, const NoiseMoments& moments);
  LagrangianParams lagrangian(double mu) const;
};

double td_error(double c, double L_hat, const Vector& psi_now, const Vector& psi_next, const Vector& theta);

// 4 x^T Q W Q x + 4 x^T Q M3, without subtracting bar_iota.
double constraint_sample(const Vector& x, const CostModel& cm);

struct LearnerState {
  long t = 0;
  Policy X;
  double mu = 0.0;
  CriticParams critic;
  Trackers trackers;
  Vector x;

  static LearnerState initial(const Policy& X0, const Vector& x0);
};

// Tracker and TD updates for one transition. `x` is the state at time t.
void critic_step(LearnerState& s, double c, double o, const Vector& x, const Vector& psi_now,
                 const Vector& psi_next, double alpha);

// [Upsilon22 K - Upsilon21, Upsilon22 b + q] from the critic views.
Matrix estimated_H(const CriticParams& critic, const Policy& X);

Policy actor_step(const Policy& X, const CriticParams& critic, const SymMatrix& Phi_hat, double beta, double box_bound);

double dual_step(double mu, double Jc_hat, double gamma, double bar_iota);

// Rolls the actor back when the running state norm jumps far above its
// recent median.
struct SafeguardConfig {
  bool enabled = true;
  double ema_rate = 1e-2;
  long block = 1000;
  int window = 32;
  int min_blocks = 8;
  double trip_factor = 50.0;
  int max_retries = 10;
};

struct TrainConfig {
  long steps = 0;
  long record_every = kDefaultRecordEvery;
  long warmup = kDefaultWarmup;
  double box_bound = kDefaultBoxBound;
  double blowup_threshold = kDefaultBlowupThreshold;
  StepSchedule schedule;
  bool update_actor = true;
  bool update_dual = true;
  SafeguardConfig safeguard;
  std::uint64_t seed = 0;
};

struct TraceRow {
  long t = 0;
  double L_hat = 0.0;
  double Jc_hat = 0.0;
  double mu = 0.0;
  std::optional<double> err_X;
  double rho_cl = 0.0;
  double x_norm = 0.0;
};

struct TrainingResult {
  LearnerState state;
  std::vector<TraceRow> trace;
  bool aborted = false;
  std::string abort_reason;
  int safeguard_trips = 0;
  double beta_scale = 1.0;
};

TrainingResult train(const Plant& plant, const CostModel& cm, const TrainConfig& cfg, LearnerState init,
                     const std::optional<Matrix>& reference_X = std::nullopt);

}  // namespace rclqr
