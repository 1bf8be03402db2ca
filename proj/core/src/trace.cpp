#include "rclqr/trace.hpp"

#include "rclqr/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rclqr {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw InvalidArgument("trace: bad number '" + s + "' in " + what);
  return v;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_trace(std::ostream& os, const TraceMeta& meta, const std::vector<TraceRow>& rows) {
  os << "# config_hash=" << hex64(meta.config_hash) << '\n';
  os << "# seed=" << meta.seed << '\n';
  for (const auto& [k, v] : meta.extra) os << "# " << k << '=' << v << '\n';
  os << kTraceHeader << '\n';
  for (const auto& r : rows) {
    os << r.t << ',' << format_double(r.L_hat) << ',' << format_double(r.Jc_hat) << ',' << format_double(r.mu) << ',';
    if (r.err_X) os << format_double(*r.err_X);
    os << ',' << format_double(r.rho_cl) << ',' << format_double(r.x_norm) << '\n';
  }
}

void write_trace_file(const std::string& path, const TraceMeta& meta, const std::vector<TraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open trace file '" + path + "' for writing");
  write_trace(out, meta, rows);
  if (!out) throw InvalidArgument("failed writing trace file '" + path + "'");
}

TraceFile read_trace(std::istream& is) {
  TraceFile tf;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq);
      const std::string val = body.substr(eq + 1);
      if (key == "config_hash") {
        tf.meta.config_hash = std::strtoull(val.c_str(), nullptr, 16);
      } else if (key == "seed") {
        tf.meta.seed = std::strtoull(val.c_str(), nullptr, 10);
      } else {
        tf.meta.extra.emplace_back(key, val);
      }
      continue;
    }
    if (!header_seen) {
      if (line != kTraceHeader) throw InvalidArgument("trace: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 7) throw InvalidArgument("trace: expected 7 columns in '" + line + "'");
    TraceRow r;
    r.t = std::strtol(cells[0].c_str(), nullptr, 10);
    r.L_hat = parse_double(cells[1], "L_hat");
    r.Jc_hat = parse_double(cells[2], "Jc_hat");
    r.mu = parse_double(cells[3], "mu");
    if (!cells[4].empty()) r.err_X = parse_double(cells[4], "err_X");
    r.rho_cl = parse_double(cells[5], "rho_cl");
    r.x_norm = parse_double(cells[6], "x_norm");
    tf.rows.push_back(r);
  }
  if (!header_seen) throw InvalidArgument("trace: missing header row");
  return tf;
}

TraceFile read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open trace file '" + path + "'");
  return read_trace(in);
}

void write_policy_record(const std::string& path, const PolicyRecord& rec) {
  json j;
  j["K"] = matrix_json(rec.policy.K);
  j["b"] = std::vector<double>(rec.policy.b.data(), rec.policy.b.data() + rec.policy.b.size());
  j["sigma"] = rec.policy.sigma;
  j["mu"] = rec.mu;
  j["source"] = rec.source;
  j["metrics"] = rec.metrics;
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open results file '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

PolicyRecord read_policy_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open policy file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("policy file '" + path + "': " + e.what());
  }
  try {
    const auto rows = j.at("K").get<std::vector<std::vector<double>>>();
    const auto b = j.at("b").get<std::vector<double>>();
    if (rows.empty()) throw InvalidArgument("policy file: empty K");
    Matrix K(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw InvalidArgument("policy file: ragged K");
      for (std::size_t k = 0; k < rows[i].size(); ++k) K(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
    }
    PolicyRecord rec;
    rec.policy = Policy(K, Eigen::Map<const Vector>(b.data(), static_cast<Index>(b.size())), j.at("sigma").get<double>());
    rec.mu = j.value("mu", 0.0);
    rec.source = j.value("source", std::string{});
    if (j.contains("metrics")) rec.metrics = j.at("metrics").get<std::map<std::string, double>>();
    return rec;
  } catch (const json::exception& e) {
    throw InvalidArgument("policy file '" + path + "': " + e.what());
  }
}

std::string plot_script(const std::string& trace_filename, bool with_error_panel) {
  std::ostringstream s;
  s << "#!/usr/bin/env python3\n"
    << "import csv\n"
    << "import os\n"
    << "import sys\n\n"
    << "import matplotlib\n"
    << "matplotlib.use(\"Agg\")\n"
    << "import matplotlib.pyplot as plt\n\n"
    << "here = os.path.dirname(os.path.abspath(__file__))\n"
    << "path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, \"" << trace_filename << "\")\n"
    << "with open(path, newline=\"\") as fh:\n"
    << "    reader = csv.DictReader(line for line in fh if not line.startswith(\"#\"))\n"
    << "    data = {name: [] for name in reader.fieldnames}\n"
    << "    for row in reader:\n"
    << "        for name, cell in row.items():\n"
    << "            data[name].append(float(cell) if cell else float(\"nan\"))\n\n"
    << "panels = [(\"L_hat\", \"L_hat\"), (\"Jc_hat\", \"Jc_hat\")]\n";
  if (with_error_panel) s << "panels.append((\"err_X\", \"||X_t - X*||_F\"))\n";
  s << "panels.append((\"mu\", \"mu\"))\n"
    << "fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.2))\n"
    << "for ax, (col, label) in zip(axes, panels):\n"
    << "    ax.plot(data[\"t\"], data[col], lw=1.0)\n"
    << "    ax.set_xlabel(\"t\")\n"
    << "    ax.set_ylabel(label)\n"
    << "    if col == \"err_X\":\n"
    << "        ax.set_yscale(\"log\")\n"
    << "    ax.grid(True, alpha=0.3)\n"
    << "fig.tight_layout()\n"
    << "out = os.path.splitext(path)[0] + \".png\"\n"
    << "fig.savefig(out, dpi=150)\n"
    << "print(out)\n";
  return s.str();
}

}  // namespace rclqr
