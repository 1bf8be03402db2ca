#include "rclqr/plant.hpp"

#include "rclqr/errors.hpp"

#include <cmath>
#include <string>

namespace rclqr {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double draw(const Primitive& p, Rng& rng) {
  return std::visit(
      Overloaded{
          [&](const Gaussian& g) { return g.mean + std::sqrt(g.variance) * standard_normal(rng); },
          [&](const GaussianMixture& mix) {
            const double r = uniform01(rng);
            double acc = 0.0;
            const MixtureComponent* pick = &mix.components.back();
            for (const auto& c : mix.components) {
              acc += c.weight;
              if (r < acc) {
                pick = &c;
                break;
              }
            }
            return pick->mean + std::sqrt(pick->variance) * standard_normal(rng);
          },
          [&](const Uniform& u) { return u.lo + (u.hi - u.lo) * uniform01(rng); },
      },
      p);
}

// Running mean and sum of squared deviations.
struct Welford {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double stderr_of_mean() const {
    return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  }
};

}  // namespace

SystemModel::SystemModel(Matrix a, Matrix b) : A(std::move(a)), B(std::move(b)) {
  if (A.rows() == 0 || A.rows() != A.cols()) throw InvalidArgument("SystemModel: A must be non-empty and square");
  if (B.rows() != A.rows() || B.cols() == 0) {
    throw InvalidArgument("SystemModel: B must have " + std::to_string(A.rows()) + " rows and at least one column");
  }
  if (!A.allFinite() || !B.allFinite()) throw InvalidArgument("SystemModel: non-finite entry");
}

double primitive_mean(const Primitive& p) {
  return std::visit(Overloaded{
                        [](const Gaussian& g) { return g.mean; },
                        [](const GaussianMixture& mix) {
                          double s = 0.0;
                          for (const auto& c : mix.components) s += c.weight * c.mean;
                          return s;
                        },
                        [](const Uniform& u) { return 0.5 * (u.lo + u.hi); },
                    },
                    p);
}

double primitive_variance(const Primitive& p) {
  return std::visit(Overloaded{
                        [](const Gaussian& g) { return g.variance; },
                        [](const GaussianMixture& mix) {
                          double second = 0.0;
                          double mean = 0.0;
                          for (const auto& c : mix.components) {
                            second += c.weight * (c.variance + c.mean * c.mean);
                            mean += c.weight * c.mean;
                          }
                          return second - mean * mean;
                        },
                        [](const Uniform& u) { return (u.hi - u.lo) * (u.hi - u.lo) / 12.0; },
                    },
                    p);
}

void validate_primitive(const Primitive& p) {
  std::visit(Overloaded{
                 [](const Gaussian& g) {
                   if (!std::isfinite(g.mean) || !(g.variance > 0.0) || !std::isfinite(g.variance)) {
                     throw InvalidArgument("gaussian noise: variance must be positive and finite");
                   }
                 },
                 [](const GaussianMixture& mix) {
                   if (mix.components.empty()) throw InvalidArgument("mixture noise: no components");
                   double total = 0.0;
                   for (const auto& c : mix.components) {
                     if (!(c.weight > 0.0)) throw InvalidArgument("mixture noise: weights must be positive");
                     if (!(c.variance > 0.0) || !std::isfinite(c.variance) || !std::isfinite(c.mean)) {
                       throw InvalidArgument("mixture noise: component variance must be positive and finite");
                     }
                     total += c.weight;
                   }
                   if (std::abs(total - 1.0) > kMixtureWeightTolerance) {
                     throw InvalidArgument("mixture noise: weights sum to " + std::to_string(total) + ", expected 1");
                   }
                 },
                 [](const Uniform& u) {
                   if (!(u.lo < u.hi) || !std::isfinite(u.lo) || !std::isfinite(u.hi)) {
                     throw InvalidArgument("uniform noise: require finite lo < hi");
                   }
                 },
             },
             p);
}

NoiseSpec::NoiseSpec(std::vector<NoiseChannel> channels, std::optional<Matrix> mapping)
    : channels_(std::move(channels)) {
  if (channels_.empty()) throw InvalidArgument("noise: at least one channel required");
  for (const auto& ch : channels_) {
    if (ch.terms.empty()) throw InvalidArgument("noise: channel with no terms");
    for (const auto& t : ch.terms) validate_primitive(t);
  }
  const auto k = static_cast<Index>(channels_.size());
  if (mapping) {
    if (mapping->cols() != k) {
      throw InvalidArgument("noise: mapping has " + std::to_string(mapping->cols()) + " columns for " +
                            std::to_string(k) + " channels");
    }
    if (!mapping->allFinite()) throw InvalidArgument("noise: non-finite mapping entry");
    mapping_ = *mapping;
  } else {
    mapping_ = Matrix::Identity(k, k);
  }
}

Vector NoiseSpec::channel_mean() const {
  Vector m = Vector::Zero(channel_count());
  for (Index i = 0; i < channel_count(); ++i) {
    for (const auto& t : channels_[static_cast<std::size_t>(i)].terms) m(i) += primitive_mean(t);
  }
  return m;
}

Vector NoiseSpec::channel_variance() const {
  Vector v = Vector::Zero(channel_count());
  for (Index i = 0; i < channel_count(); ++i) {
    for (const auto& t : channels_[static_cast<std::size_t>(i)].terms) v(i) += primitive_variance(t);
  }
  return v;
}

Vector NoiseSpec::mean() const { return mapping_ * channel_mean(); }

SymMatrix NoiseSpec::covariance() const {
  return SymMatrix::symmetrize(mapping_ * channel_variance().asDiagonal() * mapping_.transpose());
}

void NoiseSpec::sample_into(Rng& rng, Vector& out, Vector& scratch) const {
  scratch.resize(channel_count());
  for (Index i = 0; i < channel_count(); ++i) {
    double s = 0.0;
    for (const auto& t : channels_[static_cast<std::size_t>(i)].terms) s += draw(t, rng);
    scratch(i) = s;
  }
  out.noalias() = mapping_ * scratch;
}

Vector NoiseSpec::sample(Rng& rng) const {
  Vector out;
  Vector scratch;
  sample_into(rng, out, scratch);
  return out;
}

Vector sample_noise(const NoiseSpec& spec, Rng& rng) { return spec.sample(rng); }

NoiseMoments compute_moments(const NoiseSpec& spec, const SymMatrix& Q, long mc_samples, std::uint64_t seed) {
  if (mc_samples < kMinMonteCarloSamples) {
    throw InvalidArgument("compute_moments: mc_samples must be at least " + std::to_string(kMinMonteCarloSamples));
  }
  const Index n = spec.state_dim();
  if (Q.dim() != n) throw InvalidArgument("compute_moments: Q dimension does not match noise dimension");

  NoiseMoments out;
  out.wbar = spec.mean();
  out.W = spec.covariance();
  out.samples = mc_samples;
  const double trWQ = (out.W.matrix() * Q.matrix()).trace();

  Rng rng(seed);
  std::vector<Welford> m3(static_cast<std::size_t>(n));
  Welford m4;
  Vector w;
  Vector scratch;
  Vector c(n);
  for (long s = 0; s < mc_samples; ++s) {
    spec.sample_into(rng, w, scratch);
    c = w - out.wbar;
    const double qf = c.dot(Q.matrix() * c);
    for (Index i = 0; i < n; ++i) m3[static_cast<std::size_t>(i)].add(c(i) * qf);
    const double dev = qf - trWQ;
    m4.add(dev * dev);
  }
  out.M3.resize(n);
  out.M3_stderr.resize(n);
  for (Index i = 0; i < n; ++i) {
    out.M3(i) = m3[static_cast<std::size_t>(i)].mean;
    out.M3_stderr(i) = m3[static_cast<std::size_t>(i)].stderr_of_mean();
  }
  out.m4 = m4.mean;
  out.m4_stderr = m4.stderr_of_mean();
  return out;
}

Policy::Policy(Matrix k, Vector bias, double s) : K(std::move(k)), b(std::move(bias)), sigma(s) {
  if (b.size() != K.rows()) throw InvalidArgument("Policy: b length must equal the number of rows of K");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("Policy: sigma must be finite and >= 0");
  if (!K.allFinite() || !b.allFinite()) throw InvalidArgument("Policy: non-finite entry");
}

Matrix Policy::X() const {
  Matrix x(K.rows(), K.cols() + 1);
  x << K, b;
  return x;
}

Policy Policy::from_X(const Matrix& x, double sigma) {
  if (x.cols() < 2) throw InvalidArgument("Policy::from_X: X needs at least two columns");
  return Policy(x.leftCols(x.cols() - 1), x.col(x.cols() - 1), sigma);
}

bool is_stabilizing(const SystemModel& sys, const Matrix& K, double margin) {
  if (K.rows() != sys.m() || K.cols() != sys.n()) throw InvalidArgument("is_stabilizing: K has wrong shape");
  return spectral_radius(sys.closed_loop(K)) < 1.0 - margin;
}

Plant::Plant(SystemModel sys, NoiseSpec noise) : sys_(std::move(sys)), noise_(std::move(noise)) {
  if (noise_.state_dim() != sys_.n()) {
    throw InvalidArgument("Plant: noise maps into dimension " + std::to_string(noise_.state_dim()) +
                          ", state dimension is " + std::to_string(sys_.n()));
  }
}

void Plant::draw_action_into(const Vector& x, const Policy& policy, Rng& rng, Vector& u) const {
  u = policy.b;
  u.noalias() -= policy.K * x;
  if (policy.sigma > 0.0) {
    for (Index i = 0; i < u.size(); ++i) u(i) += policy.sigma * standard_normal(rng);
  }
}

void Plant::advance_into(const Vector& x, const Vector& u, Rng& rng, Vector& x_next, Vector& w,
                         Vector& scratch) const {
  noise_.sample_into(rng, w, scratch);
  x_next = w;
  x_next.noalias() += sys_.A * x;
  x_next.noalias() += sys_.B * u;
}

Vector Plant::draw_action(const Vector& x, const Policy& policy, Rng& rng) const {
  Vector u;
  draw_action_into(x, policy, rng, u);
  return u;
}

Vector Plant::advance(const Vector& x, const Vector& u, Rng& rng) const {
  Vector out;
  Vector w;
  Vector scratch;
  advance_into(x, u, rng, out, w, scratch);
  return out;
}

StepResult Plant::step(const Vector& x, const Policy& policy, Rng& rng) const {
  if (x.size() != sys_.n() || policy.K.rows() != sys_.m() || policy.K.cols() != sys_.n()) {
    throw InvalidArgument("Plant::step: dimension mismatch");
  }
  StepResult r;
  r.u = draw_action(x, policy, rng);
  r.x_next = advance(x, r.u, rng);
  return r;
}

ClosedLoopMoments closed_loop_moments(const SystemModel& sys, const NoiseMoments& moments, const Policy& policy) {
  const Index n = sys.n();
  if (policy.K.rows() != sys.m() || policy.K.cols() != n || moments.n() != n) {
    throw InvalidArgument("closed_loop_moments: dimension mismatch");
  }
  const Matrix F = sys.closed_loop(policy.K);
  ClosedLoopMoments out;
  out.zetabar = moments.wbar;
  out.PsiZeta = SymMatrix::symmetrize(moments.W.matrix() + policy.sigma * policy.sigma * sys.B * sys.B.transpose());
  // Sigma = Psi + F Sigma F^T is the P = C + F^T P F form with F^T in place of F.
  out.Sigma = solve_discrete_lyapunov(F.transpose(), out.PsiZeta);
  out.xbar = (Matrix::Identity(n, n) - F).partialPivLu().solve(sys.B * policy.b + moments.wbar);
  return out;
}

}  // namespace rclqr
