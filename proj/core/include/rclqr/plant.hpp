#pragma once

#include "rclqr/matkit.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace rclqr {

using Rng = std::mt19937_64;

inline constexpr double kMixtureWeightTolerance = 1e-12;
inline constexpr long kMinMonteCarloSamples = 10000;
inline constexpr double kPositiveDefiniteFloor = 1e-9;

struct SystemModel {
  Matrix A;
  Matrix B;

  SystemModel() = default;
  SystemModel(Matrix a, Matrix b);

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
  Matrix closed_loop(const Matrix& K) const { return A - B * K; }
};

struct Gaussian {
  double mean = 0.0;
  double variance = 1.0;
};

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double variance = 1.0;
};

struct GaussianMixture {
  std::vector<MixtureComponent> components;
};

struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};

using Primitive = std::variant<Gaussian, GaussianMixture, Uniform>;

// One scalar noise channel: the sum of independent primitive draws.
struct NoiseChannel {
  std::vector<Primitive> terms;
};

double primitive_mean(const Primitive& p);
double primitive_variance(const Primitive& p);
void validate_primitive(const Primitive& p);

// k scalar channels mapped into the state space by an n x k matrix
// (identity when no mapping is given, which requires k == n).
class NoiseSpec {
 public:
  NoiseSpec() = default;
  NoiseSpec(std::vector<NoiseChannel> channels, std::optional<Matrix> mapping = std::nullopt);

  Index channel_count() const { return static_cast<Index>(channels_.size()); }
  Index state_dim() const { return mapping_.rows(); }
  const std::vector<NoiseChannel>& channels() const { return channels_; }
  const Matrix& mapping() const { return mapping_; }

  Vector channel_mean() const;
  Vector channel_variance() const;
  Vector mean() const;
  SymMatrix covariance() const;

  Vector sample(Rng& rng) const;
  void sample_into(Rng& rng, Vector& out, Vector& scratch) const;

 private:
  std::vector<NoiseChannel> channels_;
  Matrix mapping_;
};

Vector sample_noise(const NoiseSpec& spec, Rng& rng);

struct NoiseMoments {
  Vector wbar;
  SymMatrix W;
  Vector M3;
  double m4 = 0.0;
  Vector M3_stderr;
  double m4_stderr = 0.0;
  long samples = 0;

  Index n() const { return wbar.size(); }
};

// w̄ and W exactly; M3 and m4 by seeded Monte Carlo with standard errors.
NoiseMoments compute_moments(const NoiseSpec& spec, const SymMatrix& Q, long mc_samples,
                             std::uint64_t seed = 20240607);

struct Policy {
  Matrix K;
  Vector b;
  double sigma = 0.0;

  Policy() = default;
  Policy(Matrix k, Vector bias, double s);

  Index m() const { return K.rows(); }
  Index n() const { return K.cols(); }
  // X = [K, b], m x (n+1).
  Matrix X() const;
  static Policy from_X(const Matrix& x, double sigma);
};

bool is_stabilizing(const SystemModel& sys, const Matrix& K, double margin = 0.0);

struct StepResult {
  Vector u;
  Vector x_next;
};

class Plant {
 public:
  Plant(SystemModel sys, NoiseSpec noise);

  const SystemModel& system() const { return sys_; }
  const NoiseSpec& noise() const { return noise_; }

  // Draws eta for the action first, then the process noise.
  StepResult step(const Vector& x, const Policy& policy, Rng& rng) const;
  Vector draw_action(const Vector& x, const Policy& policy, Rng& rng) const;
  Vector advance(const Vector& x, const Vector& u, Rng& rng) const;

  // Allocation-free variants for inner loops; same draw order as step().
  void draw_action_into(const Vector& x, const Policy& policy, Rng& rng, Vector& u) const;
  void advance_into(const Vector& x, const Vector& u, Rng& rng, Vector& x_next, Vector& w, Vector& scratch) const;

 private:
  SystemModel sys_;
  NoiseSpec noise_;
};

struct ClosedLoopMoments {
  Vector xbar;
  SymMatrix Sigma;
  SymMatrix PsiZeta;
  Vector zetabar;
};

ClosedLoopMoments closed_loop_moments(const SystemModel& sys, const NoiseMoments& moments,
                                      const Policy& policy);

}  // namespace rclqr
