#pragma once

#include "rclqr/config.hpp"
#include "rclqr/oracle.hpp"

#include <map>
#include <string>

namespace rclqr::testing {

inline std::string config_path(const std::string& name) {
  return std::string(RCLQR_SOURCE_DIR) + "/configs/" + name + ".json";
}

inline NoiseMoments make_moments(const Vector& wbar, const Matrix& W, const Vector& M3, double m4) {
  NoiseMoments nm;
  nm.wbar = wbar;
  nm.W = SymMatrix(W);
  nm.M3 = M3;
  nm.m4 = m4;
  nm.M3_stderr = Vector::Zero(M3.size());
  return nm;
}

// x' = 0.5 x + u + w, w ~ N(0, 1), q = r = 1.
inline Problem scalar_problem(double iota = 1e9) {
  CostSpec cost{SymMatrix(Matrix::Constant(1, 1, 1.0)), SymMatrix(Matrix::Constant(1, 1, 1.0)), iota};
  return Problem(SystemModel(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0)), cost,
                 make_moments(Vector::Zero(1), Matrix::Constant(1, 1, 1.0), Vector::Zero(1), 2.0));
}

inline Policy scalar_policy(double k, double b, double sigma) {
  return Policy(Matrix::Constant(1, 1, k), Vector::Constant(1, b), sigma);
}

// Loaded once per process; the Monte Carlo moments take a fraction of a second.
inline const RunConfig& config(const std::string& name) {
  static std::map<std::string, RunConfig> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, load_config(config_path(name))).first;
  return it->second;
}

inline const Problem& problem(const std::string& name) {
  static std::map<std::string, Problem> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, make_problem(config(name))).first;
  return it->second;
}

}  // namespace rclqr::testing
