#include "rclqr/learner.hpp"

#include "rclqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

namespace rclqr {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

double power_decay(double scale, double expo, long t) {
  return scale / std::pow(1.0 + static_cast<double>(t), expo);
}

double median_of(std::deque<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t k = values.size();
  return k % 2 == 1 ? values[k / 2] : 0.5 * (values[k / 2 - 1] + values[k / 2]);
}

}  // namespace

void StepSchedule::validate() const {
  if (!(a0 > 0.0) || !(b0 > 0.0) || !(c0 > 0.0)) throw InvalidArgument("schedule: a0, b0, c0 must be positive");
  if (!(0.5 < ea && ea < eb && eb < ec && ec <= 1.0)) {
    throw InvalidArgument("schedule: exponents must satisfy 0.5 < ea < eb < ec <= 1 (got ea=" + std::to_string(ea) +
                          ", eb=" + std::to_string(eb) + ", ec=" + std::to_string(ec) + ")");
  }
}

double StepSchedule::alpha(long t) const { return power_decay(a0, ea, t); }
double StepSchedule::beta(long t) const { return power_decay(b0, eb, t); }
double StepSchedule::gamma(long t) const { return power_decay(c0, ec, t); }

Index feature_length(Index n, Index m) { return svec_length(n + m) + n + m; }

void feature_into(const Vector& x, const Vector& u, Vector& z, Vector& out) {
  const Index n = x.size();
  const Index m = u.size();
  const Index d = n + m;
  z.resize(d);
  z.head(n) = x;
  z.tail(m) = u;
  out.resize(feature_length(n, m));
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    out(k++) = z(i) * z(i);
    for (Index j = i + 1; j < d; ++j) out(k++) = kSqrt2 * z(i) * z(j);
  }
  out.segment(k, n) = 2.0 * x;
  out.tail(m) = 2.0 * u;
}

Vector feature(const Vector& x, const Vector& u) {
  Vector z;
  Vector out;
  feature_into(x, u, z, out);
  return out;
}

CriticParams::CriticParams(Index n, Index m) : theta_(Vector::Zero(feature_length(n, m))), n_(n), m_(m) {}

CriticParams::CriticParams(Vector theta, Index n, Index m) : theta_(std::move(theta)), n_(n), m_(m) {
  if (theta_.size() != feature_length(n, m)) throw InvalidArgument("CriticParams: theta length does not match (n, m)");
}

CriticParams CriticParams::from_q_params(const QParams& qp) {
  const Index n = qp.p.size();
  const Index m = qp.q.size();
  Vector theta(feature_length(n, m));
  const Index s = svec_length(n + m);
  theta.head(s) = svec(qp.Upsilon).entries();
  theta.segment(s, n) = qp.p;
  theta.tail(m) = qp.q;
  return CriticParams(std::move(theta), n, m);
}

SymMatrix CriticParams::upsilon() const { return smat(SvecVector(theta_.head(svec_length(n_ + m_)), n_ + m_)); }
Vector CriticParams::p() const { return theta_.segment(svec_length(n_ + m_), n_); }
Vector CriticParams::q() const { return theta_.tail(m_); }

Trackers Trackers::initial(Index n) {
  Trackers t;
  t.Phi_hat = SymMatrix::identity(n + 1);
  return t;
}

CostModel CostModel::from(const CostSpec& cost, const NoiseMoments& moments) {
  CostModel cm;
  cm.Q = cost.Q;
  cm.R = cost.R;
  cm.QWQ = cost.Q.matrix() * moments.W.matrix() * cost.Q.matrix();
  cm.QM3 = cost.Q.matrix() * moments.M3;
  cm.bar_iota = rclqr::bar_iota(cost, moments);
  return cm;
}

LagrangianParams CostModel::lagrangian(double mu) const {
  if (!(mu >= 0.0)) throw InvalidArgument("multiplier mu must be >= 0");
  LagrangianParams lp;
  lp.mu = mu;
  lp.Qmu = SymMatrix::symmetrize(Q.matrix() + 4.0 * mu * QWQ);
  lp.S = 2.0 * mu * QM3;
  lp.bar_iota = bar_iota;
  return lp;
}

double td_error(double c, double L_hat, const Vector& psi_now, const Vector& psi_next, const Vector& theta) {
  if (psi_now.size() != psi_next.size() || psi_now.size() != theta.size()) {
    throw InvalidArgument("td_error: feature and parameter lengths differ");
  }
  return c - L_hat + (psi_next - psi_now).dot(theta);
}

double constraint_sample(const Vector& x, const CostModel& cm) {
  return 4.0 * x.dot(cm.QWQ * x) + 4.0 * x.dot(cm.QM3);
}

LearnerState LearnerState::initial(const Policy& X0, const Vector& x0) {
  if (x0.size() != X0.n()) throw InvalidArgument("initial state length does not match the policy");
  LearnerState s;
  s.X = X0;
  s.critic = CriticParams(X0.n(), X0.m());
  s.trackers = Trackers::initial(X0.n());
  s.x = x0;
  return s;
}

void critic_step(LearnerState& s, double c, double o, const Vector& x, const Vector& psi_now, const Vector& psi_next,
                 double alpha) {
  if (!(alpha > 0.0)) throw InvalidArgument("critic_step: alpha must be positive");
  const double delta = td_error(c, s.trackers.L_hat, psi_now, psi_next, s.critic.theta());
  if (!std::isfinite(delta) || !std::isfinite(o)) throw NumericError("critic_step: non-finite TD error or sample");
  const Index n = x.size();
  Vector z(n + 1);
  z.head(n) = x;
  z(n) = -1.0;
  s.critic.theta() += alpha * delta * psi_now;
  s.trackers.L_hat = (1.0 - alpha) * s.trackers.L_hat + alpha * c;
  s.trackers.Phi_hat = SymMatrix::symmetrize((1.0 - alpha) * s.trackers.Phi_hat.matrix() + alpha * z * z.transpose());
  s.trackers.Jc_hat = (1.0 - alpha) * s.trackers.Jc_hat + alpha * o;
}

Matrix estimated_H(const CriticParams& critic, const Policy& X) {
  const Index n = critic.n();
  const Index m = critic.m();
  const SymMatrix U = critic.upsilon();
  const Matrix U22 = U.matrix().bottomRightCorner(m, m);
  const Matrix U21 = U.matrix().bottomLeftCorner(m, n);
  Matrix H(m, n + 1);
  H.leftCols(n) = U22 * X.K - U21;
  H.col(n) = U22 * X.b + critic.q();
  return H;
}

Policy actor_step(const Policy& X, const CriticParams& critic, const SymMatrix& Phi_hat, double beta, double box_bound) {
  const Matrix H = estimated_H(critic, X);
  if (!H.allFinite()) throw NumericError("actor_step: non-finite gradient estimate");
  const Matrix next = project_box(X.X() - beta * H * Phi_hat.matrix(), -box_bound, box_bound);
  return Policy::from_X(next, X.sigma);
}

double dual_step(double mu, double Jc_hat, double gamma, double bar_iota) {
  return std::max(0.0, mu + gamma * (Jc_hat - bar_iota));
}

namespace {

// The actor-critic recursion with preallocated buffers. All right-hand sides
// of one iteration use time-t quantities.
class Runner {
 public:
  Runner(const Plant& plant, const CostModel& cm, const TrainConfig& cfg, LearnerState init,
         const std::optional<Matrix>& ref)
      : plant_(plant), cm_(cm), cfg_(cfg), ref_(ref), rng_(cfg.seed) {
    res_.state = std::move(init);
    n_ = plant.system().n();
    m_ = plant.system().m();
    d_ = n_ + m_;
    sdim_ = svec_length(d_);
    const LearnerState& s = res_.state;
    if (s.X.n() != n_ || s.X.m() != m_ || s.x.size() != n_ || s.critic.theta().size() != feature_length(n_, m_)) {
      throw InvalidArgument("train: initial state does not match the plant dimensions");
    }
    X_ = s.X.X();
    ckpt_prev_ = X_;
    ckpt_curr_ = X_;
    Phi_ = s.trackers.Phi_hat.matrix();
    H_.resize(m_, n_ + 1);
    U_.resize(d_, d_);
    zx_.resize(n_ + 1);
  }

  TrainingResult run() {
    LearnerState& s = res_.state;
    if (cfg_.steps <= 0) return std::move(res_);
    Policy pol = s.X;
    plant_.draw_action_into(s.x, pol, rng_, u_);
    feature_into(s.x, u_, z_, psi_);
    for (long k = 0; k < cfg_.steps; ++k) {
      const long t = s.t;
      plant_.advance_into(s.x, u_, rng_, x_next_, w_, scratch_);

      const double o = constraint_sample(s.x, cm_);
      const double c = s.x.dot(cm_.Q.matrix() * s.x) + u_.dot(cm_.R.matrix() * u_) + s.mu * (o - cm_.bar_iota);

      const double alpha = cfg_.schedule.alpha(t);
      const bool learning = t >= cfg_.warmup;
      double mu_next = s.mu;
      if (learning && cfg_.update_actor) {
        actor_update(s, cfg_.schedule.beta(t) * res_.beta_scale);
        pol.K = X_.leftCols(n_);
        pol.b = X_.col(n_);
      }
      if (learning && cfg_.update_dual) mu_next = dual_step(s.mu, s.trackers.Jc_hat, cfg_.schedule.gamma(t), cm_.bar_iota);

      plant_.draw_action_into(x_next_, pol, rng_, u_next_);
      feature_into(x_next_, u_next_, z_, psi_next_);

      const double delta = c - s.trackers.L_hat + (psi_next_ - psi_).dot(s.critic.theta());
      if (!std::isfinite(delta) || !std::isfinite(c)) {
        abort_run("non-finite TD error at t=" + std::to_string(t));
        break;
      }
      s.critic.theta().noalias() += (alpha * delta) * psi_;
      s.trackers.L_hat = (1.0 - alpha) * s.trackers.L_hat + alpha * c;
      zx_.head(n_) = s.x;
      zx_(n_) = -1.0;
      Phi_ *= (1.0 - alpha);
      Phi_.noalias() += alpha * zx_ * zx_.transpose();
      s.trackers.Jc_hat = (1.0 - alpha) * s.trackers.Jc_hat + alpha * o;
      s.mu = mu_next;

      s.x.swap(x_next_);
      u_.swap(u_next_);
      psi_.swap(psi_next_);
      s.t = t + 1;

      const double xn = s.x.norm();
      if (!(xn <= cfg_.blowup_threshold)) {
        abort_run("state norm " + std::to_string(xn) + " exceeded blow-up threshold at t=" + std::to_string(s.t));
        break;
      }
      if (cfg_.update_actor && cfg_.safeguard.enabled) {
        if (safeguard(xn, learning)) {
          pol.K = X_.leftCols(n_);
          pol.b = X_.col(n_);
        }
      }
      if (cfg_.record_every > 0 && s.t % cfg_.record_every == 0) record(xn);
    }
    sync_state();
    return std::move(res_);
  }

 private:
  void actor_update(const LearnerState& s, double beta) {
    const Vector& th = s.critic.theta();
    Index k = 0;
    for (Index i = 0; i < d_; ++i) {
      U_(i, i) = th(k++);
      for (Index j = i + 1; j < d_; ++j) {
        const double v = th(k++) / kSqrt2;
        U_(i, j) = v;
        U_(j, i) = v;
      }
    }
    const auto U22 = U_.bottomRightCorner(m_, m_);
    H_.leftCols(n_).noalias() = U22 * X_.leftCols(n_);
    H_.leftCols(n_) -= U_.bottomLeftCorner(m_, n_);
    H_.col(n_).noalias() = U22 * X_.col(n_);
    H_.col(n_) += th.tail(m_);
    step_.noalias() = H_ * Phi_;
    X_.noalias() -= beta * step_;
    X_ = X_.cwiseMax(-cfg_.box_bound).cwiseMin(cfg_.box_bound);
    if (!X_.allFinite()) throw NumericError("actor step produced a non-finite policy");
  }

  // Returns true when X was rolled back.
  bool safeguard(double xn, bool learning) {
    const SafeguardConfig& sg = cfg_.safeguard;
    ema_ = seen_ ? (1.0 - sg.ema_rate) * ema_ + sg.ema_rate * xn : xn;
    seen_ = true;
    block_sum_ += xn;
    if (++block_count_ == sg.block) {
      blocks_.push_back(block_sum_ / static_cast<double>(sg.block));
      if (static_cast<int>(blocks_.size()) > sg.window) blocks_.pop_front();
      block_sum_ = 0.0;
      block_count_ = 0;
      ckpt_prev_ = ckpt_curr_;
      ckpt_curr_ = X_;
    }
    if (!learning || res_.safeguard_trips >= sg.max_retries || static_cast<int>(blocks_.size()) < sg.min_blocks) {
      return false;
    }
    const double ref = median_of(blocks_);
    if (ema_ <= sg.trip_factor * ref) return false;
    ++res_.safeguard_trips;
    res_.beta_scale *= 0.5;
    X_ = ckpt_prev_;
    ckpt_curr_ = ckpt_prev_;
    ema_ = ref;
    return true;
  }

  void sync_state() {
    LearnerState& s = res_.state;
    s.X = Policy::from_X(X_, s.X.sigma);
    s.trackers.Phi_hat = SymMatrix::symmetrize(Phi_);
  }

  void record(double xn) {
    const LearnerState& s = res_.state;
    TraceRow row;
    row.t = s.t;
    row.L_hat = s.trackers.L_hat;
    row.Jc_hat = s.trackers.Jc_hat;
    row.mu = s.mu;
    if (ref_) row.err_X = (X_ - *ref_).norm();
    row.rho_cl = spectral_radius(plant_.system().A - plant_.system().B * X_.leftCols(n_));
    row.x_norm = xn;
    res_.trace.push_back(row);
  }

  void abort_run(std::string reason) {
    res_.aborted = true;
    res_.abort_reason = std::move(reason);
  }

  const Plant& plant_;
  const CostModel& cm_;
  const TrainConfig& cfg_;
  const std::optional<Matrix>& ref_;
  Rng rng_;
  TrainingResult res_;
  Index n_ = 0, m_ = 0, d_ = 0, sdim_ = 0;

  Matrix X_, Phi_, H_, U_, step_;
  Matrix ckpt_prev_, ckpt_curr_;
  Vector u_, u_next_, x_next_, w_, scratch_, z_, psi_, psi_next_, zx_;

  double ema_ = 0.0;
  bool seen_ = false;
  double block_sum_ = 0.0;
  long block_count_ = 0;
  std::deque<double> blocks_;
};

}  // namespace

TrainingResult train(const Plant& plant, const CostModel& cm, const TrainConfig& cfg, LearnerState init,
                     const std::optional<Matrix>& reference_X) {
  cfg.schedule.validate();
  if (cfg.steps < 0) throw InvalidArgument("train: steps must be >= 0");
  if (cfg.record_every <= 0) throw InvalidArgument("train: record_every must be positive");
  if (!(cfg.box_bound > 0.0)) throw InvalidArgument("train: box_bound must be positive");
  if (!is_stabilizing(plant.system(), init.X.K)) {
    throw InstabilityError("train: initial policy is not stabilizing");
  }
  if (reference_X && (reference_X->rows() != plant.system().m() || reference_X->cols() != plant.system().n() + 1)) {
    throw InvalidArgument("train: reference policy has the wrong shape");
  }
  Runner runner(plant, cm, cfg, std::move(init), reference_X);
  return runner.run();
}

}  // namespace rclqr
