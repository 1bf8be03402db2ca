#pragma once

#include "rclqr/errors.hpp"
#include "rclqr/learner.hpp"
#include "rclqr/oracle.hpp"
#include "rclqr/plant.hpp"

#include <cstdint>
#include <string>

namespace rclqr {

enum class ConfigErrorKind { Parse, Schema, Dimension, UnstablePolicy };

class ConfigError : public Error {
 public:
  ConfigError(ConfigErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ConfigErrorKind kind() const { return kind_; }

 private:
  ConfigErrorKind kind_;
};

struct RunConfig {
  SystemModel system;
  CostSpec cost;
  NoiseSpec noise;
  long mc_samples = 1000000;
  std::uint64_t mc_seed = 20240607;

  Policy policy0;
  Vector x0;
  double stability_margin = 0.0;

  TrainConfig train;
  SolverConfig solver;
  bool reference = true;

  std::string trace_path = "trace.csv";
  bool plots = false;

  // Canonical JSON text of the input and its FNV-1a hash.
  std::string canonical;
  std::uint64_t hash = 0;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);

// Monte Carlo moments plus the problem data the oracle needs.
Problem make_problem(const RunConfig& cfg);

}  // namespace rclqr
