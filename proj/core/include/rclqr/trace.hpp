#pragma once

#include "rclqr/learner.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rclqr {

inline constexpr const char* kTraceHeader = "t,L_hat,Jc_hat,mu,err_X,rho_cl,x_norm";

struct TraceMeta {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> extra;
};

struct TraceFile {
  TraceMeta meta;
  std::vector<TraceRow> rows;
};

// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);
std::string hex64(std::uint64_t v);

void write_trace(std::ostream& os, const TraceMeta& meta, const std::vector<TraceRow>& rows);
void write_trace_file(const std::string& path, const TraceMeta& meta, const std::vector<TraceRow>& rows);
TraceFile read_trace(std::istream& is);
TraceFile read_trace_file(const std::string& path);

// Policy and multiplier written by `train` and `oracle`, read by `evaluate`.
struct PolicyRecord {
  Policy policy;
  double mu = 0.0;
  std::string source;
  std::map<std::string, double> metrics;
};

void write_policy_record(const std::string& path, const PolicyRecord& rec);
PolicyRecord read_policy_record(const std::string& path);

// Standalone matplotlib script drawing L_hat, Jc_hat, err_X and mu against t.
std::string plot_script(const std::string& trace_filename, bool with_error_panel);

}  // namespace rclqr
