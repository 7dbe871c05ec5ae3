#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "augsched/scheduler.hpp"

// Metrics persistence. Files open with the schema line
// "# augsched-metrics v1"; trailing comment lines carry the step
// accounting (rollout env steps and the separately itemized ExDA fill).

namespace augsched {

struct MetricsRow {
  long long steps = 0;
  int epoch = 0;
  std::string method;
  std::uint64_t seed = 0;
  double train_return = 0.0;
  double test_bg_return = 0.0;
  double test_lv_return = 0.0;
  double loss_pi = 0.0;
  double loss_v = 0.0;
  double entropy = 0.0;
  double loss_da = 0.0;
  double policy_distance = 0.0;
  int da_phase = 0;
};

namespace detail_metrics {
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail_metrics

inline std::vector<MetricsRow> rows_from_run(const RunResult& run, const std::string& method,
                                             std::uint64_t seed) {
  std::vector<MetricsRow> rows;
  rows.reserve(run.evals.size());
  for (const EvalPoint& p : run.evals) {
    MetricsRow r;
    r.steps = p.steps;
    r.epoch = p.epoch;
    r.method = method;
    r.seed = seed;
    r.train_return = p.train_ret;
    r.test_bg_return = p.test_bg_ret;
    r.test_lv_return = p.test_lv_ret;
    r.loss_pi = p.loss_pi;
    r.loss_v = p.loss_v;
    r.entropy = p.entropy;
    r.loss_da = p.loss_da;
    r.policy_distance = p.policy_distance;
    r.da_phase = p.da_phase;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                              const RunCounters* counters = nullptr) {
  for (const MetricsRow& r : rows) {
    for (double v : {r.train_return, r.test_bg_return, r.test_lv_return, r.loss_pi, r.loss_v,
                     r.entropy, r.loss_da, r.policy_distance})
      if (!std::isfinite(v))
        throw std::runtime_error("metrics: non-finite value in row for epoch " +
                                 std::to_string(r.epoch));
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("metrics: cannot open " + path);
  os << "# augsched-metrics v1\n";
  os << "steps,epoch,method,seed,train_return,test_bg_return,test_lv_return,"
        "loss_pi,loss_v,entropy,loss_da,policy_distance,da_phase\n";
  using detail_metrics::fmt;
  for (const MetricsRow& r : rows) {
    os << r.steps << ',' << r.epoch << ',' << r.method << ',' << r.seed << ','
       << fmt(r.train_return) << ',' << fmt(r.test_bg_return) << ',' << fmt(r.test_lv_return)
       << ',' << fmt(r.loss_pi) << ',' << fmt(r.loss_v) << ',' << fmt(r.entropy) << ','
       << fmt(r.loss_da) << ',' << fmt(r.policy_distance) << ',' << r.da_phase << "\n";
  }
  if (counters) {
    os << "# env_steps=" << counters->env_steps << "\n";
    os << "# exda_fill_steps=" << counters->exda_fill_steps << "\n";
    os << "# rollouts=" << counters->rollouts << "\n";
    os << "# da_phases=" << counters->da_phases << "\n";
    os << "# updates=" << counters->updates << "\n";
  }
  if (!os) throw std::runtime_error("metrics: write failure on " + path);
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("metrics: cannot open " + path);
  std::string line;
  std::vector<MetricsRow> rows;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!header_seen && line.rfind("# augsched-metrics", 0) != 0)
        throw std::runtime_error("metrics: missing schema line in " + path);
      header_seen = true;
      continue;
    }
    if (line.rfind("steps,", 0) == 0) continue;  // column header
    std::istringstream ls(line);
    std::string field;
    MetricsRow r;
    auto next = [&]() {
      if (!std::getline(ls, field, ',')) throw std::runtime_error("metrics: short row in " + path);
      return field;
    };
    r.steps = std::stoll(next());
    r.epoch = std::stoi(next());
    r.method = next();
    r.seed = std::stoull(next());
    r.train_return = std::stod(next());
    r.test_bg_return = std::stod(next());
    r.test_lv_return = std::stod(next());
    r.loss_pi = std::stod(next());
    r.loss_v = std::stod(next());
    r.entropy = std::stod(next());
    r.loss_da = std::stod(next());
    r.policy_distance = std::stod(next());
    r.da_phase = std::stoi(next());
    rows.push_back(std::move(r));
  }
  return rows;
}

// Arm-selection log: one row per bandit round with the per-arm scores at
// selection time.
inline void write_gain_csv(const std::string& path, const std::vector<GainRecord>& records,
                           const std::vector<std::string>& arm_names) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("gain log: cannot open " + path);
  os << "round,arm,gain";
  for (std::size_t k = 0; k < arm_names.size(); ++k) os << ",ucb_" << k;
  os << ",forced\n";
  using detail_metrics::fmt;
  for (const GainRecord& r : records) {
    os << r.round << ',' << r.arm << ',' << fmt(r.gain);
    for (double s : r.scores) os << ',' << fmt(s);
    os << ',' << (r.forced ? 1 : 0) << "\n";
  }
  if (!os) throw std::runtime_error("gain log: write failure on " + path);
}

}  // namespace augsched
