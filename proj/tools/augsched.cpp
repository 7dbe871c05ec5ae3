#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "augsched/checkpoint.hpp"
#include "augsched/config.hpp"
#include "augsched/evaluate.hpp"
#include "augsched/suite.hpp"

namespace fs = std::filesystem;
using namespace augsched;

namespace {

int cmd_run(const std::string& config_path, long long seed, const std::string& method,
            const std::string& out) {
  ExperimentConfig cfg = parse_config(config_path);
  if (seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed)};
  if (!method.empty()) cfg.methods = {parse_method(method)};
  if (!out.empty()) cfg.out_dir = out;
  SuiteResult res = run_suite(cfg);
  int failures = 0;
  for (const RunSummary& r : res.runs) {
    std::printf("%-14s seed %-4llu %s", r.method.c_str(),
                static_cast<unsigned long long>(r.seed), r.ok ? "ok" : "FAILED");
    if (r.ok)
      std::printf("  train %.3f  test-bg %.3f  test-lv %.3f\n", r.train, r.test_bg, r.test_lv);
    else
      std::printf("  (%s)\n", r.error.c_str());
    if (!r.ok) ++failures;
  }
  std::printf("report: %s\n", (fs::path(res.out_dir) / "report.txt").string().c_str());
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
             const std::string& mode_str, int episodes, long long seed) {
  ExperimentConfig cfg = parse_config(config_path);
  TrainSetup setup = cfg.to_setup(Method::ppo);
  Checkpoint ck = load_checkpoint(checkpoint_path, setup.net.hash());
  const EnvMode mode = parse_mode(mode_str);
  const int n = episodes > 0 ? episodes : cfg.eval_episodes;
  const double mean = evaluate(ck.params, setup.net, setup.env, mode, n,
                               static_cast<std::uint64_t>(seed));
  std::printf("%s mean return over %d episodes: %.6f\n", mode_name(mode), n, mean);
  return 0;
}

int cmd_report(const std::string& dir) {
  auto summaries = summaries_from_dir(dir);
  if (summaries.empty()) {
    std::fprintf(stderr, "report: no run CSVs found under %s\n", dir.c_str());
    return 1;
  }
  EvalReport report = build_report(summaries);
  write_report_files(dir, report);
  std::ifstream is((fs::path(dir) / "report.txt").string());
  std::cout << is.rdbuf();
  return 0;
}

int cmd_dump_frames(const std::string& config_path, const std::string& out) {
  ExperimentConfig cfg = parse_config(config_path);
  fs::create_directories(out);
  for (EnvMode mode : {EnvMode::easybg, EnvMode::test_bg, EnvMode::test_lv}) {
    Env env = make_env(cfg.env, mode, 0);
    Tensor obs = env.reset();
    std::string tag = mode_name(mode);
    for (char& c : tag)
      if (c == '-') c = '_';
    write_ppm(obs, (fs::path(out) / (tag + "_reset.ppm")).string());
    Rng act(1);
    for (int t = 1; t <= 3; ++t) {
      StepResult r = env.step(act.uniform_int(kNumActions));
      write_ppm(r.obs, (fs::path(out) / (tag + "_step" + std::to_string(t) + ".ppm")).string());
      if (r.done) break;
    }
  }
  Env env = make_env(cfg.env, EnvMode::easybg, 0);
  Tensor frame = env.reset();
  Rng aug_rng(2);
  for (const AugmentationSpec& spec : cfg.augmentation_list()) {
    Tensor t = apply(spec, frame, aug_rng);
    write_ppm(t, (fs::path(out) / (std::string("aug_") + aug_name(spec.kind) + ".ppm")).string());
  }
  std::printf("frames written to %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scheduled data-augmentation distillation for pixel RL"};
  app.require_subcommand(1);

  std::string config_path, method, out, checkpoint_path, mode_str = "easybg", runs_dir;
  std::string dump_out = "frames";
  long long seed = -1;
  int episodes = 0;

  CLI::App* run = app.add_subcommand("run", "train every (method, seed) pair of a config");
  run->add_option("config", config_path, "experiment config file")->required();
  run->add_option("--seed", seed, "restrict to one seed");
  run->add_option("--method", method, "restrict to one method tag");
  run->add_option("--out", out, "override the output directory");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on one mode");
  eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--config", config_path, "experiment config file")->required();
  eval->add_option("--mode", mode_str, "easybg, test-bg or test-lv")->required();
  eval->add_option("--episodes", episodes, "episode count (default: config)");
  eval->add_option("--seed", seed, "evaluation seed");

  CLI::App* report = app.add_subcommand("report", "aggregate a runs directory");
  report->add_option("runs_dir", runs_dir, "directory of run CSVs")->required();

  CLI::App* dump = app.add_subcommand("dump-frames", "write rendered observations as PPM");
  dump->add_option("config", config_path, "experiment config file")->required();
  dump->add_option("--out", dump_out, "output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path, seed, method, out);
    if (eval->parsed()) return cmd_eval(checkpoint_path, config_path, mode_str, episodes,
                                        seed < 0 ? 0 : seed);
    if (report->parsed()) return cmd_report(runs_dir);
    if (dump->parsed()) return cmd_dump_frames(config_path, dump_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "augsched: %s\n", e.what());
    return 2;
  }
  return 1;
}
