#include "rclqr/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace rclqr {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& msg) { throw ConfigError(ConfigErrorKind::Schema, msg); }
[[noreturn]] void dimension_error(const std::string& msg) { throw ConfigError(ConfigErrorKind::Dimension, msg); }

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) schema_error(where + ": unknown key '" + item.key() + "'");
  }
}

const json& section(const json& root, const char* key) {
  if (!root.contains(key) || !root.at(key).is_object()) schema_error(std::string("missing object '") + key + "'");
  return root.at(key);
}

double number(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) schema_error(where + ": missing '" + key + "'");
  if (!obj.at(key).is_number()) schema_error(where + "." + key + ": expected a number");
  return obj.at(key).get<double>();
}

double number_or(const json& obj, const std::string& where, const char* key, double fallback) {
  return obj.contains(key) ? number(obj, where, key) : fallback;
}

long integer_or(const json& obj, const std::string& where, const char* key, long fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) schema_error(where + "." + key + ": expected an integer");
  return v.get<long>();
}

bool bool_or(const json& obj, const std::string& where, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) schema_error(where + "." + key + ": expected true or false");
  return obj.at(key).get<bool>();
}

Matrix matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) schema_error(where + ": expected a non-empty array of rows");
  const auto rows = static_cast<Index>(v.size());
  Index cols = -1;
  Matrix out;
  for (Index i = 0; i < rows; ++i) {
    const json& row = v.at(static_cast<std::size_t>(i));
    if (!row.is_array()) schema_error(where + ": row " + std::to_string(i) + " is not an array");
    if (cols < 0) {
      cols = static_cast<Index>(row.size());
      if (cols == 0) schema_error(where + ": empty row");
      out.resize(rows, cols);
    } else if (static_cast<Index>(row.size()) != cols) {
      dimension_error(where + ": ragged rows (row " + std::to_string(i) + " has " + std::to_string(row.size()) +
                      " entries, expected " + std::to_string(cols) + ")");
    }
    for (Index j = 0; j < cols; ++j) {
      const json& e = row.at(static_cast<std::size_t>(j));
      if (!e.is_number()) schema_error(where + ": non-numeric entry");
      out(i, j) = e.get<double>();
    }
  }
  return out;
}

Vector vector(const json& v, const std::string& where) {
  if (!v.is_array()) schema_error(where + ": expected an array");
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v.at(i).is_number()) schema_error(where + ": non-numeric entry");
    out(static_cast<Index>(i)) = v.at(i).get<double>();
  }
  return out;
}

SymMatrix sym_matrix(const json& v, const std::string& where) {
  const Matrix m = matrix(v, where);
  if (m.rows() != m.cols()) dimension_error(where + ": must be square");
  try {
    return SymMatrix(m);
  } catch (const InvalidArgument& e) {
    schema_error(where + ": " + e.what());
  }
}

// Gaussian parameters accept either "variance" or "std".
double variance_of(const json& obj, const std::string& where) {
  const bool has_var = obj.contains("variance");
  const bool has_std = obj.contains("std");
  if (has_var == has_std) schema_error(where + ": give exactly one of 'variance' or 'std'");
  if (has_var) return number(obj, where, "variance");
  const double s = number(obj, where, "std");
  return s * s;
}

Primitive primitive(const json& obj, const std::string& where) {
  if (!obj.is_object() || !obj.contains("type") || !obj.at("type").is_string()) {
    schema_error(where + ": noise term needs a string 'type'");
  }
  const std::string type = obj.at("type").get<std::string>();
  Primitive p;
  if (type == "gaussian") {
    reject_unknown(obj, where, {"type", "mean", "variance", "std"});
    p = Gaussian{number(obj, where, "mean"), variance_of(obj, where)};
  } else if (type == "mixture") {
    reject_unknown(obj, where, {"type", "components"});
    if (!obj.contains("components") || !obj.at("components").is_array()) schema_error(where + ": missing 'components'");
    GaussianMixture mix;
    std::size_t k = 0;
    for (const auto& c : obj.at("components")) {
      const std::string cw = where + ".components[" + std::to_string(k++) + "]";
      reject_unknown(c, cw, {"weight", "mean", "variance", "std"});
      mix.components.push_back({number(c, cw, "weight"), number(c, cw, "mean"), variance_of(c, cw)});
    }
    p = mix;
  } else if (type == "uniform") {
    reject_unknown(obj, where, {"type", "lo", "hi"});
    p = Uniform{number(obj, where, "lo"), number(obj, where, "hi")};
  } else {
    schema_error(where + ": unknown noise type '" + type + "'");
  }
  try {
    validate_primitive(p);
  } catch (const InvalidArgument& e) {
    schema_error(where + ": " + e.what());
  }
  return p;
}

NoiseSpec noise_spec(const json& noise, const SystemModel& sys) {
  if (!noise.contains("channels") || !noise.at("channels").is_array() || noise.at("channels").empty()) {
    schema_error("noise: 'channels' must be a non-empty array");
  }
  std::vector<NoiseChannel> channels;
  std::size_t i = 0;
  for (const auto& ch : noise.at("channels")) {
    const std::string where = "noise.channels[" + std::to_string(i++) + "]";
    NoiseChannel c;
    if (ch.is_array()) {
      std::size_t j = 0;
      for (const auto& term : ch) c.terms.push_back(primitive(term, where + "[" + std::to_string(j++) + "]"));
    } else {
      c.terms.push_back(primitive(ch, where));
    }
    if (c.terms.empty()) schema_error(where + ": empty channel");
    channels.push_back(std::move(c));
  }
  std::optional<Matrix> mapping;
  if (noise.contains("mapping")) {
    const json& mp = noise.at("mapping");
    if (mp.is_string()) {
      if (mp.get<std::string>() != "B") schema_error("noise.mapping: the only named mapping is \"B\"");
      mapping = sys.B;
    } else {
      mapping = matrix(mp, "noise.mapping");
    }
  }
  const auto k = static_cast<Index>(channels.size());
  if (mapping) {
    if (mapping->cols() != k) {
      dimension_error("noise.mapping: " + std::to_string(mapping->cols()) + " columns for " + std::to_string(k) +
                      " channels");
    }
    if (mapping->rows() != sys.n()) dimension_error("noise.mapping: must have n = " + std::to_string(sys.n()) + " rows");
  } else if (k != sys.n()) {
    dimension_error("noise: " + std::to_string(k) + " channels without a mapping, state dimension is " +
                    std::to_string(sys.n()));
  }
  return NoiseSpec(std::move(channels), mapping);
}

std::string position_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(ConfigErrorKind::Parse,
                      origin + ": parse error at " + position_of(text, e.byte) + " (byte " + std::to_string(e.byte) + ")");
  }
  if (!root.is_object()) schema_error(origin + ": top level must be an object");
  reject_unknown(root, "config",
                 {"system", "cost", "noise", "policy0", "schedules", "run", "safeguard", "solver", "output", "name",
                  "description"});

  RunConfig cfg;
  cfg.canonical = root.dump();
  cfg.hash = fnv1a64(cfg.canonical);

  const json& sys = section(root, "system");
  reject_unknown(sys, "system", {"A", "B"});
  if (!sys.contains("A") || !sys.contains("B")) schema_error("system: needs 'A' and 'B'");
  const Matrix A = matrix(sys.at("A"), "system.A");
  const Matrix B = matrix(sys.at("B"), "system.B");
  if (A.rows() != A.cols()) dimension_error("system.A: must be square");
  if (B.rows() != A.rows()) dimension_error("system.B: must have " + std::to_string(A.rows()) + " rows");
  cfg.system = SystemModel(A, B);
  const Index n = cfg.system.n();
  const Index m = cfg.system.m();

  const json& cost = section(root, "cost");
  reject_unknown(cost, "cost", {"Q", "R", "iota"});
  if (!cost.contains("Q") || !cost.contains("R")) schema_error("cost: needs 'Q' and 'R'");
  cfg.cost.Q = sym_matrix(cost.at("Q"), "cost.Q");
  cfg.cost.R = sym_matrix(cost.at("R"), "cost.R");
  cfg.cost.iota = number(cost, "cost", "iota");
  if (cfg.cost.Q.dim() != n) dimension_error("cost.Q: must be " + std::to_string(n) + "x" + std::to_string(n));
  if (cfg.cost.R.dim() != m) dimension_error("cost.R: must be " + std::to_string(m) + "x" + std::to_string(m));
  if (min_eigenvalue(cfg.cost.R) <= 0.0) schema_error("cost.R: must be positive definite");
  if (min_eigenvalue(cfg.cost.Q) < -kPositiveDefiniteFloor) schema_error("cost.Q: must be positive semidefinite");

  const json& noise = section(root, "noise");
  reject_unknown(noise, "noise", {"channels", "mapping", "mc_samples", "mc_seed"});
  cfg.noise = noise_spec(noise, cfg.system);
  cfg.mc_samples = integer_or(noise, "noise", "mc_samples", cfg.mc_samples);
  if (cfg.mc_samples < kMinMonteCarloSamples) {
    schema_error("noise.mc_samples: must be at least " + std::to_string(kMinMonteCarloSamples));
  }
  cfg.mc_seed = static_cast<std::uint64_t>(integer_or(noise, "noise", "mc_seed", static_cast<long>(cfg.mc_seed)));

  const json& pol = section(root, "policy0");
  reject_unknown(pol, "policy0", {"K0", "b0", "sigma"});
  if (!pol.contains("K0")) schema_error("policy0: needs 'K0'");
  const Matrix K0 = matrix(pol.at("K0"), "policy0.K0");
  if (K0.rows() != m || K0.cols() != n) {
    dimension_error("policy0.K0: must be " + std::to_string(m) + "x" + std::to_string(n));
  }
  const Vector b0 = pol.contains("b0") ? vector(pol.at("b0"), "policy0.b0") : Vector::Zero(m);
  if (b0.size() != m) dimension_error("policy0.b0: must have " + std::to_string(m) + " entries");
  const double sigma = number_or(pol, "policy0", "sigma", 0.5);
  if (!(sigma >= 0.0)) schema_error("policy0.sigma: must be >= 0");
  cfg.policy0 = Policy(K0, b0, sigma);

  if (root.contains("schedules")) {
    const json& s = root.at("schedules");
    reject_unknown(s, "schedules", {"a0", "b0", "c0", "ea", "eb", "ec"});
    StepSchedule& sc = cfg.train.schedule;
    sc.a0 = number_or(s, "schedules", "a0", sc.a0);
    sc.b0 = number_or(s, "schedules", "b0", sc.b0);
    sc.c0 = number_or(s, "schedules", "c0", sc.c0);
    sc.ea = number_or(s, "schedules", "ea", sc.ea);
    sc.eb = number_or(s, "schedules", "eb", sc.eb);
    sc.ec = number_or(s, "schedules", "ec", sc.ec);
  }
  try {
    cfg.train.schedule.validate();
  } catch (const InvalidArgument& e) {
    schema_error(e.what());
  }

  cfg.x0 = Vector::Zero(n);
  if (root.contains("run")) {
    const json& r = root.at("run");
    reject_unknown(r, "run",
                   {"steps", "seed", "record_every", "warmup", "box_bound", "blowup_threshold", "stability_margin", "x0",
                    "reference", "update_actor", "update_dual"});
    TrainConfig& t = cfg.train;
    t.steps = integer_or(r, "run", "steps", t.steps);
    t.seed = static_cast<std::uint64_t>(integer_or(r, "run", "seed", 0));
    t.record_every = integer_or(r, "run", "record_every", t.record_every);
    t.warmup = integer_or(r, "run", "warmup", t.warmup);
    t.box_bound = number_or(r, "run", "box_bound", t.box_bound);
    t.blowup_threshold = number_or(r, "run", "blowup_threshold", t.blowup_threshold);
    t.update_actor = bool_or(r, "run", "update_actor", t.update_actor);
    t.update_dual = bool_or(r, "run", "update_dual", t.update_dual);
    cfg.stability_margin = number_or(r, "run", "stability_margin", cfg.stability_margin);
    cfg.reference = bool_or(r, "run", "reference", cfg.reference);
    if (r.contains("x0")) cfg.x0 = vector(r.at("x0"), "run.x0");
    if (cfg.x0.size() != n) dimension_error("run.x0: must have " + std::to_string(n) + " entries");
    if (t.steps < 0) schema_error("run.steps: must be >= 0");
    if (t.record_every <= 0) schema_error("run.record_every: must be positive");
    if (t.warmup < 0) schema_error("run.warmup: must be >= 0");
    if (!(t.box_bound > 0.0)) schema_error("run.box_bound: must be positive");
    if (!(t.blowup_threshold > 0.0)) schema_error("run.blowup_threshold: must be positive");
    if (!(cfg.stability_margin >= 0.0 && cfg.stability_margin < 1.0)) schema_error("run.stability_margin: must be in [0, 1)");
  }

  if (root.contains("safeguard")) {
    const json& s = root.at("safeguard");
    reject_unknown(s, "safeguard",
                   {"enabled", "ema_rate", "block", "window", "min_blocks", "trip_factor", "max_retries"});
    SafeguardConfig& g = cfg.train.safeguard;
    g.enabled = bool_or(s, "safeguard", "enabled", g.enabled);
    g.ema_rate = number_or(s, "safeguard", "ema_rate", g.ema_rate);
    g.block = integer_or(s, "safeguard", "block", g.block);
    g.window = static_cast<int>(integer_or(s, "safeguard", "window", g.window));
    g.min_blocks = static_cast<int>(integer_or(s, "safeguard", "min_blocks", g.min_blocks));
    g.trip_factor = number_or(s, "safeguard", "trip_factor", g.trip_factor);
    g.max_retries = static_cast<int>(integer_or(s, "safeguard", "max_retries", g.max_retries));
    if (!(g.ema_rate > 0.0 && g.ema_rate <= 1.0) || g.block <= 0 || g.window <= 0 || g.min_blocks <= 0 ||
        !(g.trip_factor > 1.0) || g.max_retries < 0) {
      schema_error("safeguard: parameter out of range");
    }
  }

  if (root.contains("solver")) {
    const json& s = root.at("solver");
    reject_unknown(s, "solver", {"tol_inner", "tol_outer", "max_inner_iterations", "max_outer_iterations", "mu_max"});
    SolverConfig& sv = cfg.solver;
    sv.tol_inner = number_or(s, "solver", "tol_inner", sv.tol_inner);
    sv.tol_outer = number_or(s, "solver", "tol_outer", sv.tol_outer);
    sv.max_inner_iterations = static_cast<int>(integer_or(s, "solver", "max_inner_iterations", sv.max_inner_iterations));
    sv.max_outer_iterations = static_cast<int>(integer_or(s, "solver", "max_outer_iterations", sv.max_outer_iterations));
    sv.mu_max = number_or(s, "solver", "mu_max", sv.mu_max);
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    reject_unknown(o, "output", {"trace_path", "plots"});
    if (o.contains("trace_path")) {
      if (!o.at("trace_path").is_string()) schema_error("output.trace_path: expected a string");
      cfg.trace_path = o.at("trace_path").get<std::string>();
    }
    cfg.plots = bool_or(o, "output", "plots", cfg.plots);
  }

  const double rho = spectral_radius(cfg.system.closed_loop(cfg.policy0.K));
  if (!(rho < 1.0 - cfg.stability_margin)) {
    throw ConfigError(ConfigErrorKind::UnstablePolicy,
                      "policy0.K0 is not stabilizing: spectral radius of A - B K0 is " + std::to_string(rho));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) schema_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

Problem make_problem(const RunConfig& cfg) {
  NoiseMoments nm = compute_moments(cfg.noise, cfg.cost.Q, cfg.mc_samples, cfg.mc_seed);
  return Problem(cfg.system, cfg.cost, std::move(nm));
}

}  // namespace rclqr
