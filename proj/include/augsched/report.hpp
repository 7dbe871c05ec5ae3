#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "augsched/metrics.hpp"

// Aggregation over completed runs: per-(method, mode) mean and population
// standard deviation over seeds, plus normalized scores against the PPO
// mean on the same mode.

namespace augsched {

struct RunSummary {
  std::string method;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double train = 0.0;
  double test_bg = 0.0;
  double test_lv = 0.0;
};

struct ReportRow {
  std::string method;
  int seeds_present = 0;
  int seeds_expected = 0;
  bool flagged = false;  // missing or failed seeds
  double mean[3] = {0, 0, 0};    // train, test_bg, test_lv
  double stddev[3] = {0, 0, 0};  // population formula
  double normalized[3] = {0, 0, 0};
  bool has_normalized = false;
};

struct EvalReport {
  std::vector<ReportRow> rows;
};

inline EvalReport build_report(const std::vector<RunSummary>& runs) {
  std::set<std::uint64_t> all_seeds;
  for (const RunSummary& r : runs) all_seeds.insert(r.seed);
  std::map<std::string, std::vector<const RunSummary*>> by_method;
  std::vector<std::string> order;
  for (const RunSummary& r : runs) {
    if (!by_method.count(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }

  EvalReport report;
  double ppo_mean[3] = {0, 0, 0};
  bool have_ppo = false;

  auto stats_of = [](const std::vector<const RunSummary*>& rs, ReportRow& row) {
    std::vector<double> vals[3];
    for (const RunSummary* r : rs) {
      if (!r->ok) continue;
      vals[0].push_back(r->train);
      vals[1].push_back(r->test_bg);
      vals[2].push_back(r->test_lv);
    }
    row.seeds_present = static_cast<int>(vals[0].size());
    for (int m = 0; m < 3; ++m) {
      if (vals[m].empty()) continue;
      double mean = 0.0;
      for (double v : vals[m]) mean += v;
      mean /= static_cast<double>(vals[m].size());
      double var = 0.0;
      for (double v : vals[m]) var += (v - mean) * (v - mean);
      var /= static_cast<double>(vals[m].size());
      row.mean[m] = mean;
      row.stddev[m] = std::sqrt(var);
    }
  };

  for (const std::string& method : order) {
    ReportRow row;
    row.method = method;
    row.seeds_expected = static_cast<int>(all_seeds.size());
    stats_of(by_method[method], row);
    for (const RunSummary* r : by_method[method])
      if (!r->ok) row.flagged = true;
    if (row.seeds_present < row.seeds_expected) row.flagged = true;
    if (method == "ppo" && row.seeds_present > 0) {
      have_ppo = true;
      for (int m = 0; m < 3; ++m) ppo_mean[m] = row.mean[m];
    }
    report.rows.push_back(row);
  }
  if (have_ppo) {
    for (ReportRow& row : report.rows) {
      row.has_normalized = true;
      for (int m = 0; m < 3; ++m)
        row.normalized[m] = ppo_mean[m] != 0.0 ? row.mean[m] / ppo_mean[m]
                                               : (row.mean[m] == 0.0 ? 1.0 : 0.0);
    }
  }
  return report;
}

// Summaries from a runs directory: the final metrics row of every
// <method>_seed<k>.csv; <...>.error.txt marks a failed run.
inline std::vector<RunSummary> summaries_from_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<RunSummary> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.ends_with(".csv") && name.find("_seed") != std::string::npos &&
        name.find("_gains") == std::string::npos && name != "report.csv")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& p : files) {
    RunSummary s;
    auto rows = read_metrics_csv(p.string());
    if (rows.empty()) {
      s.ok = false;
      s.error = "empty metrics file";
      const std::string base = p.stem().string();
      const std::size_t at = base.find("_seed");
      s.method = base.substr(0, at);
      if (at != std::string::npos) s.seed = std::stoull(base.substr(at + 5));
      out.push_back(s);
      continue;
    }
    const MetricsRow& last = rows.back();
    s.method = last.method;
    s.seed = last.seed;
    s.train = last.train_return;
    s.test_bg = last.test_bg_return;
    s.test_lv = last.test_lv_return;
    s.ok = true;
    fs::path err = p;
    err.replace_extension(".error.txt");
    if (fs::exists(err)) {
      s.ok = false;
      s.error = "run reported an error";
    }
    out.push_back(s);
  }
  return out;
}

inline void write_report_files(const std::string& dir, const EvalReport& report) {
  namespace fs = std::filesystem;
  using detail_metrics::fmt;
  {
    std::ofstream os((fs::path(dir) / "report.csv").string(), std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot open report.csv");
    os << "# augsched-report v1 (std = population formula)\n";
    os << "method,seeds,flagged,train_mean,train_std,test_bg_mean,test_bg_std,"
          "test_lv_mean,test_lv_std,norm_train,norm_test_bg,norm_test_lv\n";
    for (const ReportRow& r : report.rows) {
      os << r.method << ',' << r.seeds_present << ',' << (r.flagged ? 1 : 0);
      for (int m = 0; m < 3; ++m) os << ',' << fmt(r.mean[m]) << ',' << fmt(r.stddev[m]);
      for (int m = 0; m < 3; ++m) os << ',' << (r.has_normalized ? fmt(r.normalized[m]) : "");
      os << "\n";
    }
  }
  {
    std::ofstream os((fs::path(dir) / "report.txt").string(), std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot open report.txt");
    os << "method         seeds  train (mean+/-std)      test-bg                 test-lv"
          "                 normalized(train/bg/lv)\n";
    char buf[256];
    for (const ReportRow& r : report.rows) {
      std::snprintf(buf, sizeof(buf), "%-14s %3d%s   %8.3f +/- %-8.3f %8.3f +/- %-8.3f %8.3f "
                                      "+/- %-8.3f",
                    r.method.c_str(), r.seeds_present, r.flagged ? "!" : " ", r.mean[0],
                    r.stddev[0], r.mean[1], r.stddev[1], r.mean[2], r.stddev[2]);
      os << buf;
      if (r.has_normalized) {
        std::snprintf(buf, sizeof(buf), "  %5.2f /%5.2f /%5.2f", r.normalized[0],
                      r.normalized[1], r.normalized[2]);
        os << buf;
      }
      os << "\n";
    }
    os << "\n'!' marks methods with missing or failed seed runs.\n";
  }
}

}  // namespace augsched
