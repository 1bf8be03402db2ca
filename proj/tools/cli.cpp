#include "cli.hpp"

#include "rclqr/config.hpp"
#include "rclqr/learner.hpp"
#include "rclqr/oracle.hpp"
#include "rclqr/trace.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace rclqr::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::optional<long> seed;
  std::optional<long> steps;
  std::string out = ".";
  bool plots = false;
  std::string seeds;
  std::string policy;
  std::string reference;
  bool no_reference = false;
  long eval_steps = 1000000;
};

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::get("rclqr");
  if (!logger) {
    logger = spdlog::stderr_color_mt("rclqr");
    logger->set_pattern("[%l] %v");
  }
  const char* env = std::getenv("RCLQR_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    logger->set_level(spdlog::level::err);
  } else if (level == "debug") {
    logger->set_level(spdlog::level::debug);
  } else {
    logger->set_level(spdlog::level::info);
  }
  return logger;
}

const Eigen::IOFormat kMatFmt(10, 0, ", ", "\n", "    [", "]");
const Eigen::IOFormat kVecFmt(10, Eigen::DontAlignCols, ", ", ", ", "", "", "[", "]");

std::string vec_str(const Vector& v) {
  std::ostringstream s;
  s << v.transpose().format(kVecFmt);
  return s.str();
}

void print_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
  out << "  " << name << " =\n" << m.format(kMatFmt) << '\n';
}

std::pair<long, long> parse_seed_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const long v = std::stol(s);
      return {v, v};
    }
    const long a = std::stol(s.substr(0, dots));
    const long b = std::stol(s.substr(dots + 2));
    if (b < a) throw std::invalid_argument("empty range");
    return {a, b};
  } catch (const std::exception&) {
    throw ConfigError(ConfigErrorKind::Schema, "--seeds: expected a range like 1..8, got '" + s + "'");
  }
}

RunConfig load(const Options& opt) {
  RunConfig cfg = load_config(opt.config);
  if (opt.seed) cfg.train.seed = static_cast<std::uint64_t>(*opt.seed);
  if (opt.steps) {
    if (*opt.steps < 0) throw ConfigError(ConfigErrorKind::Schema, "--steps must be >= 0");
    cfg.train.steps = *opt.steps;
  }
  if (opt.plots) cfg.plots = true;
  if (opt.no_reference) cfg.reference = false;
  return cfg;
}

fs::path output_path(const Options& opt, const std::string& name) {
  fs::path p(name);
  if (p.is_absolute()) return p;
  return fs::path(opt.out) / p;
}

fs::path with_seed_suffix(const fs::path& p, std::uint64_t seed) {
  fs::path q = p;
  q.replace_filename(p.stem().string() + "_seed" + std::to_string(seed) + p.extension().string());
  return q;
}

void report_certificate(std::ostream& out, const KktCertificate& c) {
  out << std::setprecision(10);
  out << "KKT certificate\n"
      << "  mu                           = " << c.mu << '\n'
      << "  J_c(X)                       = " << c.Jc << '\n'
      << "  bar_iota                     = " << c.bar_iota << '\n'
      << "  ||grad_X L||_F               = " << c.grad_norm << '\n'
      << "  |mu (J_c - bar_iota)|        = " << c.complementary_slackness << '\n'
      << "  max(0, J_c - bar_iota)       = " << c.primal_infeasibility << '\n';
}

std::optional<Matrix> reference_policy(const Options& opt, const RunConfig& cfg, const Problem& pr,
                                       spdlog::logger& log) {
  if (!opt.reference.empty()) {
    const PolicyRecord rec = read_policy_record(opt.reference);
    log.info("reference X* read from {}", opt.reference);
    return rec.policy.X();
  }
  if (!cfg.reference) return std::nullopt;
  try {
    const ReferenceSolution ref = solve_reference(pr, cfg.policy0, cfg.solver);
    log.info("reference solve: mu* = {:.6g}, J_c(X*) = {:.6g}, bar_iota = {:.6g}", ref.mu, ref.Jc, ref.bar_iota);
    return ref.policy.X();
  } catch (const SolverError& e) {
    log.warn("reference solve failed ({}); err_X column left blank", e.what());
    return std::nullopt;
  }
}

struct TrainOutcome {
  int code = kSuccess;
  std::string summary;
};

TrainOutcome train_one(const RunConfig& cfg, const Problem& pr, const std::optional<Matrix>& ref,
                       std::uint64_t seed, const fs::path& trace_path, const fs::path& results_path, bool plots) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const CostModel cm = CostModel::from(pr.cost, pr.moments);
  const Plant plant(cfg.system, cfg.noise);
  TrainingResult res = train(plant, cm, tc, LearnerState::initial(cfg.policy0, cfg.x0), ref);

  TraceMeta meta;
  meta.config_hash = cfg.hash;
  meta.seed = seed;
  meta.extra = {{"steps", std::to_string(tc.steps)},
                {"warmup", std::to_string(tc.warmup)},
                {"record_every", std::to_string(tc.record_every)},
                {"bar_iota", format_double(cm.bar_iota)},
                {"reference", ref ? "yes" : "no"},
                {"safeguard_trips", std::to_string(res.safeguard_trips)},
                {"status", res.aborted ? "aborted: " + res.abort_reason : "completed"}};
  write_trace_file(trace_path.string(), meta, res.trace);
  if (plots) {
    fs::path script = trace_path;
    script.replace_extension(".py");
    std::ofstream(script) << plot_script(trace_path.filename().string(), ref.has_value());
  }

  PolicyRecord rec;
  rec.policy = res.state.X;
  rec.mu = res.state.mu;
  rec.source = "train";
  rec.metrics["steps"] = static_cast<double>(res.state.t);
  rec.metrics["seed"] = static_cast<double>(seed);
  rec.metrics["L_hat"] = res.state.trackers.L_hat;
  rec.metrics["Jc_hat"] = res.state.trackers.Jc_hat;
  rec.metrics["bar_iota"] = cm.bar_iota;
  rec.metrics["aborted"] = res.aborted ? 1.0 : 0.0;
  rec.metrics["safeguard_trips"] = res.safeguard_trips;
  if (ref) rec.metrics["err_X"] = (res.state.X.X() - *ref).norm();
  std::ostringstream summary;
  summary << std::setprecision(8) << "seed " << seed << ": t=" << res.state.t << " L_hat=" << res.state.trackers.L_hat
          << " Jc_hat=" << res.state.trackers.Jc_hat << " mu=" << res.state.mu;
  if (ref) summary << " err_X=" << rec.metrics["err_X"];
  if (is_stabilizing(cfg.system, res.state.X.K)) {
    rec.metrics["L_oracle"] = lagrangian_value(pr, res.state.X, res.state.mu);
    rec.metrics["Jc_oracle"] = constraint_value(pr, res.state.X);
    rec.metrics["J_oracle"] = average_cost(pr, res.state.X);
    summary << " J_c(X_T)=" << rec.metrics["Jc_oracle"];
  }
  write_policy_record(results_path.string(), rec);

  TrainOutcome outcome;
  if (res.aborted) {
    summary << " ABORTED (" << res.abort_reason << ")";
    outcome.code = kInstability;
  }
  outcome.summary = summary.str();
  return outcome;
}

int cmd_train(const Options& opt, std::ostream& out, spdlog::logger& log) {
  const RunConfig cfg = load(opt);
  fs::create_directories(opt.out);
  log.info("config {} (hash {}), n={}, m={}, steps={}", opt.config, hex64(cfg.hash), cfg.system.n(), cfg.system.m(),
           cfg.train.steps);
  const Problem pr = make_problem(cfg);
  log.debug("bar_iota = {:.10g}", bar_iota(pr.cost, pr.moments));
  const std::optional<Matrix> ref = reference_policy(opt, cfg, pr, log);

  const fs::path trace = output_path(opt, cfg.trace_path);
  fs::path results = trace;
  results.replace_filename("results.json");

  if (opt.seeds.empty()) {
    const TrainOutcome o = train_one(cfg, pr, ref, cfg.train.seed, trace, results, cfg.plots);
    out << o.summary << '\n' << "trace: " << trace.string() << '\n' << "results: " << results.string() << '\n';
    return o.code;
  }

  const auto [a, b] = parse_seed_range(opt.seeds);
  std::vector<std::future<TrainOutcome>> jobs;
  for (long s = a; s <= b; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    jobs.push_back(std::async(std::launch::async, [&, seed] {
      return train_one(cfg, pr, ref, seed, with_seed_suffix(trace, seed), with_seed_suffix(results, seed), cfg.plots);
    }));
  }
  int code = kSuccess;
  for (auto& j : jobs) {
    const TrainOutcome o = j.get();
    out << o.summary << '\n';
    if (o.code != kSuccess) code = o.code;
  }
  return code;
}

int cmd_oracle(const Options& opt, std::ostream& out, spdlog::logger& log) {
  const RunConfig cfg = load(opt);
  fs::create_directories(opt.out);
  const Problem pr = make_problem(cfg);
  const double ib = bar_iota(pr.cost, pr.moments);
  out << std::setprecision(10);

  const Policy& p0 = cfg.policy0;
  const ValueParams vp0 = value_params(pr, p0, 0.0);
  const ClosedLoopMoments clm0 = closed_loop_moments(pr.system, pr.moments, p0);
  out << "Initial policy X0 at mu = 0\n";
  print_matrix(out, "K0", p0.K);
  out << "  b0 = " << vec_str(p0.b) << ", sigma = " << p0.sigma << '\n';
  out << "  rho(A - B K0) = " << spectral_radius(pr.system.closed_loop(p0.K)) << '\n';
  print_matrix(out, "Sigma_K0", clm0.Sigma.matrix());
  out << "  xbar = " << vec_str(clm0.xbar) << '\n';
  print_matrix(out, "P_K0", vp0.P.matrix());
  out << "  g = " << vec_str(vp0.g) << ", z1 = " << vp0.z1 << '\n';
  out << "  J(X0) = " << average_cost(pr, p0) << ", J_c(X0) = " << constraint_value(pr, p0) << '\n';

  try {
    const ReferenceSolution ref = solve_reference(pr, cfg.policy0, cfg.solver);
    out << "Reference solution\n";
    print_matrix(out, "K*", ref.policy.K);
    out << "  b* = " << vec_str(ref.policy.b) << '\n';
    out << "  mu* = " << ref.mu << '\n'
        << "  L(X*, mu*) = " << ref.L << '\n'
        << "  J(X*) = " << ref.J << '\n'
        << "  J_c(X*) = " << ref.Jc << '\n'
        << "  bar_iota = " << ib << '\n'
        << "  rho(A - B K*) = " << spectral_radius(pr.system.closed_loop(ref.policy.K)) << '\n'
        << "  inner iterations = " << ref.inner_iterations << ", outer iterations = " << ref.outer_iterations << '\n';
    report_certificate(out, ref.certificate);

    PolicyRecord rec;
    rec.policy = ref.policy;
    rec.mu = ref.mu;
    rec.source = "oracle";
    rec.metrics = {{"L", ref.L},
                   {"J", ref.J},
                   {"Jc", ref.Jc},
                   {"bar_iota", ib},
                   {"grad_norm", ref.certificate.grad_norm},
                   {"complementary_slackness", ref.certificate.complementary_slackness},
                   {"primal_infeasibility", ref.certificate.primal_infeasibility}};
    const fs::path path = output_path(opt, "oracle.json");
    write_policy_record(path.string(), rec);
    out << "results: " << path.string() << '\n';
    return kSuccess;
  } catch (const SolverError& e) {
    log.error("reference solve failed: {}", e.what());
    out << "Reference solve FAILED: " << e.what() << '\n';
    report_certificate(out, e.certificate());
    return kSolverFailure;
  }
}

int cmd_evaluate(const Options& opt, std::ostream& out, spdlog::logger& log) {
  const RunConfig cfg = load(opt);
  if (opt.policy.empty()) throw ConfigError(ConfigErrorKind::Schema, "evaluate: --policy FILE is required");
  const PolicyRecord rec = read_policy_record(opt.policy);
  const Problem pr = make_problem(cfg);
  const Policy& pol = rec.policy;
  if (pol.K.rows() != pr.m() || pol.K.cols() != pr.n()) {
    throw ConfigError(ConfigErrorKind::Dimension, "evaluate: policy shape does not match the configured system");
  }
  const double ib = bar_iota(pr.cost, pr.moments);
  const double rho = spectral_radius(pr.system.closed_loop(pol.K));
  out << std::setprecision(10);
  out << "Policy from " << opt.policy << " (source: " << rec.source << ")\n";
  print_matrix(out, "K", pol.K);
  out << "  b = " << vec_str(pol.b) << ", sigma = " << pol.sigma << ", mu = " << rec.mu << '\n';
  out << "  rho(A - B K) = " << rho << '\n';
  if (!(rho < 1.0)) {
    out << "  policy is NOT stabilizing; simulation skipped\n";
    log.error("policy is not stabilizing (rho = {})", rho);
    return kInstability;
  }
  const double J = average_cost(pr, pol);
  const double Jc = constraint_value(pr, pol);
  const double L = lagrangian_value(pr, pol, rec.mu);
  out << "Oracle\n"
      << "  J(X) = " << J << '\n'
      << "  J_c(X) = " << Jc << '\n'
      << "  bar_iota = " << ib << '\n'
      << "  slack bar_iota - J_c(X) = " << ib - Jc << '\n'
      << "  L(X, mu) = " << L << '\n';

  if (opt.eval_steps > 0) {
    const Plant plant(cfg.system, cfg.noise);
    const CostModel cm = CostModel::from(pr.cost, pr.moments);
    Rng rng(cfg.train.seed);
    Vector x = closed_loop_moments(pr.system, pr.moments, pol).xbar;
    double sum_j = 0.0;
    double sum_jc = 0.0;
    for (long t = 0; t < opt.eval_steps; ++t) {
      const StepResult st = plant.step(x, pol, rng);
      sum_j += x.dot(cm.Q.matrix() * x) + st.u.dot(cm.R.matrix() * st.u);
      sum_jc += constraint_sample(x, cm);
      x = st.x_next;
    }
    const auto T = static_cast<double>(opt.eval_steps);
    out << "Simulation (" << opt.eval_steps << " steps, seed " << cfg.train.seed << ")\n"
        << "  J estimate = " << sum_j / T << '\n'
        << "  J_c estimate = " << sum_jc / T << '\n';
  }
  return kSuccess;
}

int cmd_moments(const Options& opt, std::ostream& out, spdlog::logger&) {
  const RunConfig cfg = load(opt);
  const NoiseMoments nm = compute_moments(cfg.noise, cfg.cost.Q, cfg.mc_samples, cfg.mc_seed);
  const Matrix WQ = nm.W.matrix() * cfg.cost.Q.matrix();
  const double trWQ2 = (WQ * WQ).trace();
  out << std::setprecision(10);
  out << "Noise moments (" << nm.samples << " Monte Carlo samples, seed " << cfg.mc_seed << ")\n";
  out << "  wbar = " << vec_str(nm.wbar) << '\n';
  print_matrix(out, "W", nm.W.matrix());
  out << "  M3 = " << vec_str(nm.M3) << "  (std. err. " << vec_str(nm.M3_stderr) << ")\n";
  out << "  m4 = " << nm.m4 << "  (std. err. " << nm.m4_stderr << ")\n";
  out << "  min eig(W) = " << min_eigenvalue(nm.W) << '\n';
  out << "bar_iota = iota - m4 + 4 tr[(WQ)^2]\n"
      << "  iota = " << cfg.cost.iota << '\n'
      << "  4 tr[(WQ)^2] = " << 4.0 * trWQ2 << '\n'
      << "  bar_iota = " << cfg.cost.iota - nm.m4 + 4.0 * trWQ2 << "  (std. err. " << nm.m4_stderr << ")\n";
  return kSuccess;
}

int exit_code_for(const ConfigError& e) {
  switch (e.kind()) {
    case ConfigErrorKind::Dimension:
      return kDimensionMismatch;
    case ConfigErrorKind::UnstablePolicy:
      return kUnstableInitialPolicy;
    default:
      return kConfigError;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Actor-critic learning for risk-constrained LQR", "rclqr"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run configuration")->required();
    sub->add_option("--seed", opt.seed, "override run.seed");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
  };
  CLI::App* train = app.add_subcommand("train", "run the actor-critic learner and write a trace");
  add_common(train);
  train->add_option("--steps", opt.steps, "override run.steps");
  train->add_flag("--plots", opt.plots, "also write a matplotlib script next to the trace");
  train->add_option("--seeds", opt.seeds, "fan out independent runs over a seed range a..b");
  train->add_option("--reference", opt.reference, "oracle.json to use as X* for err_X");
  train->add_flag("--no-reference", opt.no_reference, "skip the reference solve");

  CLI::App* oracle = app.add_subcommand("oracle", "model-based reference solution and KKT certificate");
  add_common(oracle);

  CLI::App* evaluate = app.add_subcommand("evaluate", "exact and simulated cost of a saved policy");
  add_common(evaluate);
  evaluate->add_option("--policy", opt.policy, "results.json or oracle.json")->required();
  evaluate->add_option("--eval-steps", opt.eval_steps, "simulation length (0 skips)")->capture_default_str();

  CLI::App* moments = app.add_subcommand("moments", "noise moments and the reformulated constraint level");
  add_common(moments);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kSuccess : kConfigError;
  }

  auto log = make_logger();
  try {
    if (*train) return cmd_train(opt, out, *log);
    if (*oracle) return cmd_oracle(opt, out, *log);
    if (*evaluate) return cmd_evaluate(opt, out, *log);
    if (*moments) return cmd_moments(opt, out, *log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const InstabilityError& e) {
    err << "instability: " << e.what() << '\n';
    return kInstability;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kConfigError;
}

}  // namespace rclqr::cli
