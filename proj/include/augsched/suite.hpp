#pragma once

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <thread>
#include <vector>

#include "augsched/checkpoint.hpp"
#include "augsched/config.hpp"
#include "augsched/metrics.hpp"
#include "augsched/report.hpp"
#include "augsched/svg.hpp"

// (method x seed) grid execution with a bounded worker pool. Every run owns
// its env instances, rng streams and output files; a failure is recorded
// next to the run's outputs without aborting siblings.

namespace augsched {

inline int suite_worker_limit(int jobs) {
  int limit = static_cast<int>(std::thread::hardware_concurrency());
  if (limit < 1) limit = 1;
  if (const char* env = std::getenv("AUGSCHED_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) limit = v;
  }
  return std::min(limit, jobs);
}

struct SuiteJob {
  Method method = Method::ppo;
  std::uint64_t seed = 0;
};

inline std::string run_basename(Method method, std::uint64_t seed) {
  return std::string(method_name(method)) + "_seed" + std::to_string(seed);
}

inline RunSummary execute_run(const ExperimentConfig& cfg, Method method, std::uint64_t seed,
                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  const std::string base = (fs::path(out_dir) / run_basename(method, seed)).string();
  RunSummary summary;
  summary.method = method_name(method);
  summary.seed = seed;
  try {
    TrainSetup setup = cfg.to_setup(method);
    RunResult run = run_training(setup, seed);
    auto rows = rows_from_run(run, method_name(method), seed);
    write_metrics_csv(base + ".csv", rows, &run.counters);
    save_checkpoint(run.params, run.adam, base + ".ckpt");
    if (!run.gain_log.empty()) write_gain_csv(base + "_gains.csv", run.gain_log, run.arm_names);
    if (!rows.empty()) {
      summary.train = rows.back().train_return;
      summary.test_bg = rows.back().test_bg_return;
      summary.test_lv = rows.back().test_lv_return;
    }
    summary.ok = true;
  } catch (const std::exception& e) {
    summary.ok = false;
    summary.error = e.what();
    std::ofstream os(base + ".error.txt", std::ios::trunc);
    os << e.what() << "\n";
  }
  return summary;
}

inline void emit_suite_plots(const ExperimentConfig& cfg,
                             const std::vector<SuiteJob>& jobs, const std::string& out_dir) {
  namespace fs = std::filesystem;
  // per method: curves averaged pointwise across seeds
  std::map<std::string, std::map<int, std::array<std::pair<double, int>, 4>>> agg;
  std::map<std::string, std::map<int, double>> steps_of;
  for (const SuiteJob& job : jobs) {
    const std::string base = (fs::path(out_dir) / run_basename(job.method, job.seed)).string();
    if (!fs::exists(base + ".csv")) continue;
    for (const MetricsRow& r : read_metrics_csv(base + ".csv")) {
      auto& slot = agg[r.method][r.epoch];
      const double vals[4] = {r.train_return, r.test_bg_return, r.test_lv_return,
                              r.policy_distance};
      for (int m = 0; m < 4; ++m) {
        slot[static_cast<std::size_t>(m)].first += vals[m];
        slot[static_cast<std::size_t>(m)].second += 1;
      }
      steps_of[r.method][r.epoch] = static_cast<double>(r.steps);
    }
  }
  static const char* mode_series[3] = {"train", "test-bg", "test-lv"};
  for (const auto& [method, by_epoch] : agg) {
    std::vector<Series> series(3);
    Series pd;
    pd.name = "policy distance";
    for (int m = 0; m < 3; ++m) series[static_cast<std::size_t>(m)].name = mode_series[m];
    for (const auto& [epoch, slot] : by_epoch) {
      const double x = steps_of[method][epoch];
      for (int m = 0; m < 3; ++m) {
        series[static_cast<std::size_t>(m)].x.push_back(x);
        series[static_cast<std::size_t>(m)].y.push_back(
            slot[static_cast<std::size_t>(m)].first / slot[static_cast<std::size_t>(m)].second);
      }
      pd.x.push_back(x);
      pd.y.push_back(slot[3].first / slot[3].second);
    }
    write_line_chart_svg((fs::path(out_dir) / (method + "_returns.svg")).string(),
                         method + " returns (" + std::to_string(cfg.seeds.size()) + " seeds)",
                         "env steps", "mean return", series);
    write_line_chart_svg((fs::path(out_dir) / (method + "_policy_distance.svg")).string(),
                         method + " policy distance", "env steps", "mean JS", {pd});
  }
  // per mode: methods side by side
  for (int m = 0; m < 3; ++m) {
    std::vector<Series> series;
    for (const auto& [method, by_epoch] : agg) {
      Series s;
      s.name = method;
      for (const auto& [epoch, slot] : by_epoch) {
        s.x.push_back(steps_of.at(method).at(epoch));
        s.y.push_back(slot[static_cast<std::size_t>(m)].first /
                      slot[static_cast<std::size_t>(m)].second);
      }
      series.push_back(std::move(s));
    }
    write_line_chart_svg(
        (fs::path(out_dir) / (std::string("compare_") + mode_series[m] + ".svg")).string(),
        std::string("methods on ") + mode_series[m], "env steps", "mean return", series);
  }
}

struct SuiteResult {
  std::vector<RunSummary> runs;
  EvalReport report;
  std::string out_dir;
};

inline SuiteResult run_suite(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  std::vector<SuiteJob> jobs;
  for (Method m : cfg.methods)
    for (std::uint64_t s : cfg.seeds) jobs.push_back({m, s});

  std::vector<RunSummary> summaries(jobs.size());
  std::atomic<std::size_t> next{0};
  const int workers = suite_worker_limit(static_cast<int>(jobs.size()));
  auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      summaries[i] = execute_run(cfg, jobs[i].method, jobs[i].seed, cfg.out_dir);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  SuiteResult result;
  result.runs = summaries;
  result.report = build_report(summaries);
  result.out_dir = cfg.out_dir;
  write_report_files(cfg.out_dir, result.report);
  emit_suite_plots(cfg, jobs, cfg.out_dir);
  return result;
}

}  // namespace augsched
