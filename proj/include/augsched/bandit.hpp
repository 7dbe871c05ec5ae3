#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace augsched {

struct BanditConfig {
  int window = 3;           // W, gains kept per arm
  int min_exploration = 15; // forced round-robin rounds before UCB takes over
  double eps_gap = 1e-3;    // epsilon added to the gain gap when deriving c

  void validate() const {
    if (window < 2) throw std::invalid_argument("BanditConfig: window must be >= 2");
    if (min_exploration < 0) throw std::invalid_argument("BanditConfig: negative exploration");
    if (eps_gap < 0.0) throw std::invalid_argument("BanditConfig: negative eps");
  }
};

// Non-stationary UCB state: pull counts plus a ring of the last W gains per
// arm. Rounds count completed selections, so sum(pulls) == rounds always.
struct BanditState {
  BanditConfig cfg;
  std::vector<std::string> arm_names;
  int identity_arm = -1;  // index of the no-augmentation arm, -1 if absent
  std::vector<int> pulls;
  std::vector<std::deque<double>> gains;
  int rounds = 0;

  static BanditState init(std::vector<std::string> names, int identity_arm,
                          const BanditConfig& cfg) {
    cfg.validate();
    if (names.size() < 1) throw std::invalid_argument("BanditState: no arms");
    BanditState s;
    s.cfg = cfg;
    s.arm_names = std::move(names);
    s.identity_arm = identity_arm;
    s.pulls.assign(s.arm_names.size(), 0);
    s.gains.assign(s.arm_names.size(), {});
    return s;
  }

  int num_arms() const { return static_cast<int>(arm_names.size()); }

  // Complete round-robin cycles covering at least min_exploration rounds,
  // so every arm ends the forced phase with ceil(min_exploration/K) pulls.
  int forced_rounds() const {
    const int k = num_arms();
    const int cycles = (cfg.min_exploration + k - 1) / k;
    return cycles * k;
  }

  double windowed_mean(int arm) const {
    const auto& g = gains[static_cast<std::size_t>(arm)];
    if (g.empty()) return 0.0;
    double s = 0.0;
    for (double v : g) s += v;
    return s / static_cast<double>(g.size());
  }

  void record_gain(int arm, double gain) {
    auto& g = gains[static_cast<std::size_t>(arm)];
    g.push_back(gain);
    while (static_cast<int>(g.size()) > cfg.window) g.pop_front();
  }

  void commit(int arm) {
    pulls[static_cast<std::size_t>(arm)] += 1;
    rounds += 1;
  }
};

struct SelectResult {
  int arm = 0;
  bool forced = false;
  double c = 0.0;
  std::vector<double> scores;  // per-arm UCB scores at selection time
};

// Selection for round s (s = selections made so far). During the forced
// phase arms rotate round-robin. Afterwards the exploration coefficient c
// follows the forced-exploration rule: c equalizes the best and worst
// windowed gains unless the count gap term falls below the 1/sqrt(W-1) -
// 1/sqrt(W) floor. Ties break toward the lowest arm index.
inline SelectResult ucb_select(const BanditState& state, int s) {
  const int k = state.num_arms();
  SelectResult out;
  out.scores.resize(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a) out.scores[static_cast<std::size_t>(a)] = state.windowed_mean(a);

  if (s < state.forced_rounds()) {
    out.arm = s % k;
    out.forced = true;
    return out;
  }

  int kmax = 0, kmin = 0;
  for (int a = 1; a < k; ++a) {
    if (out.scores[static_cast<std::size_t>(a)] > out.scores[static_cast<std::size_t>(kmax)])
      kmax = a;
    if (out.scores[static_cast<std::size_t>(a)] < out.scores[static_cast<std::size_t>(kmin)])
      kmin = a;
  }
  const double gap = out.scores[static_cast<std::size_t>(kmax)] -
                     out.scores[static_cast<std::size_t>(kmin)];
  const double w = static_cast<double>(state.cfg.window);
  const double floor_term = 1.0 / std::sqrt(w - 1.0) - 1.0 / std::sqrt(w);
  const double count_term =
      1.0 / std::sqrt(static_cast<double>(state.pulls[static_cast<std::size_t>(kmin)])) -
      1.0 / std::sqrt(static_cast<double>(state.pulls[static_cast<std::size_t>(kmax)]));
  const double logs = std::log(static_cast<double>(s));
  out.c = (gap + state.cfg.eps_gap) / (std::sqrt(logs) * std::max(count_term, floor_term));

  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a) {
    const double bonus =
        out.c * std::sqrt(logs / static_cast<double>(state.pulls[static_cast<std::size_t>(a)]));
    out.scores[static_cast<std::size_t>(a)] += bonus;
    if (out.scores[static_cast<std::size_t>(a)] > best_score) {
      best_score = out.scores[static_cast<std::size_t>(a)];
      best = a;
    }
  }
  out.arm = best;
  return out;
}

// G(s): mean of the per-rollout returns collected over the round's interval,
// each return being the rollout's mean of (advantage + predicted value).
inline double compute_gain(std::span<const double> rollout_returns) {
  if (rollout_returns.empty()) throw std::invalid_argument("compute_gain: empty interval");
  double s = 0.0;
  for (double v : rollout_returns) s += v;
  return s / static_cast<double>(rollout_returns.size());
}

struct GainRecord {
  int round = 0;
  int arm = 0;
  double gain = 0.0;
  std::vector<double> scores;
  bool forced = false;
};

}  // namespace augsched
