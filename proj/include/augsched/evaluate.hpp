#pragma once

#include <vector>

#include "augsched/gridworld.hpp"
#include "augsched/network.hpp"
#include "augsched/ppo.hpp"

namespace augsched {

// Mean undiscounted return of the stochastic policy over `episodes`
// episodes drawn from the mode's level/background distribution. Episodes
// run in lockstep so the forward passes batch; deterministic given seed.
inline double evaluate(const ParameterSet& params, const NetworkSpec& spec, const EnvConfig& cfg,
                       EnvMode mode, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  std::vector<Env> envs;
  envs.reserve(static_cast<std::size_t>(episodes));
  for (int i = 0; i < episodes; ++i)
    envs.emplace_back(cfg, mode, Rng::mix(Rng(seed).derive("eval-env").state(),
                                          static_cast<std::uint64_t>(i)));
  Rng act = Rng(seed).derive("eval-act");

  std::vector<Tensor> obs(static_cast<std::size_t>(episodes));
  std::vector<double> returns(static_cast<std::size_t>(episodes), 0.0);
  std::vector<std::uint8_t> done(static_cast<std::size_t>(episodes), 0);
  for (int i = 0; i < episodes; ++i) obs[static_cast<std::size_t>(i)] = envs[static_cast<std::size_t>(i)].reset();

  const std::size_t stride =
      static_cast<std::size_t>(cfg.image) * cfg.image * cfg.channels;
  int remaining = episodes;
  while (remaining > 0) {
    std::vector<int> active;
    for (int i = 0; i < episodes; ++i)
      if (!done[static_cast<std::size_t>(i)]) active.push_back(i);
    Tensor batch({static_cast<int>(active.size()), cfg.image, cfg.image, cfg.channels});
    for (std::size_t a = 0; a < active.size(); ++a)
      std::copy_n(obs[static_cast<std::size_t>(active[a])].data.begin(), stride,
                  batch.data.begin() + static_cast<long>(stride * a));
    ActorCriticOutput out = forward(params, spec, batch);
    Tensor probs = kernels::softmax(out.logits);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const int i = active[a];
      const int action = sample_categorical(&probs.data[a * static_cast<std::size_t>(spec.num_actions)],
                                            spec.num_actions, act);
      StepResult r = envs[static_cast<std::size_t>(i)].step(action);
      returns[static_cast<std::size_t>(i)] += r.reward;
      if (r.done) {
        done[static_cast<std::size_t>(i)] = 1;
        --remaining;
      } else {
        obs[static_cast<std::size_t>(i)] = std::move(r.obs);
      }
    }
  }
  double total = 0.0;
  for (double r : returns) total += r;
  return total / static_cast<double>(episodes);
}

}  // namespace augsched
