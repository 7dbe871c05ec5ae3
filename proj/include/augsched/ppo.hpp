#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "augsched/adam.hpp"
#include "augsched/autodiff.hpp"
#include "augsched/gridworld.hpp"
#include "augsched/network.hpp"
#include "augsched/rng.hpp"

namespace augsched {

struct PPOConfig {
  double gamma = 0.999;
  double lam = 0.95;
  double clip_eps = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int epochs = 3;
  int minibatches = 8;
  double lr = 5e-4;
  bool reward_norm = true;
  int num_envs = 8;
  int rollout_steps = 128;

  void validate() const {
    if (gamma < 0.0 || gamma > 1.0 || lam < 0.0 || lam > 1.0)
      throw std::invalid_argument("PPOConfig: gamma and lambda must lie in [0,1]");
    if (clip_eps <= 0.0) throw std::invalid_argument("PPOConfig: clip range must be positive");
    if (epochs < 0 || minibatches < 1 || num_envs < 1 || rollout_steps < 1)
      throw std::invalid_argument("PPOConfig: bad loop sizes");
  }
};

// Divides rewards by the running std of the per-stream discounted return
// accumulator; no mean subtraction. Normalized rewards are clipped to
// +-10 like the usual implementation.
class RewardNormalizer {
 public:
  RewardNormalizer(int num_envs, double gamma)
      : gamma_(gamma), acc_(static_cast<std::size_t>(num_envs), 0.0) {}

  double process(int env_idx, double reward, bool done) {
    double& acc = acc_[static_cast<std::size_t>(env_idx)];
    acc = reward + gamma_ * acc;
    ++count_;
    const double d = acc - mean_;
    mean_ += d / static_cast<double>(count_);
    m2_ += d * (acc - mean_);
    if (done) acc = 0.0;
    const double norm = reward / std();
    return std::clamp(norm, -10.0, 10.0);
  }

  double variance() const { return count_ > 0 ? m2_ / static_cast<double>(count_) : 0.0; }
  double std() const { return std::sqrt(variance() + 1e-8); }
  long long count() const { return count_; }

  std::vector<double> serialize() const {
    std::vector<double> out = {gamma_, static_cast<double>(count_), mean_, m2_,
                               static_cast<double>(acc_.size())};
    out.insert(out.end(), acc_.begin(), acc_.end());
    return out;
  }

  static RewardNormalizer deserialize(const std::vector<double>& s) {
    if (s.size() < 5) throw std::invalid_argument("RewardNormalizer: bad serialized state");
    RewardNormalizer n(static_cast<int>(s[4]), s[0]);
    n.count_ = static_cast<long long>(s[1]);
    n.mean_ = s[2];
    n.m2_ = s[3];
    for (std::size_t i = 0; i < n.acc_.size(); ++i) n.acc_[i] = s[5 + i];
    return n;
  }

 private:
  double gamma_;
  std::vector<double> acc_;
  long long count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// E parallel env streams with auto-reset and episode-return bookkeeping.
class VecEnv {
 public:
  VecEnv(const EnvConfig& cfg, EnvMode mode, int count, std::uint64_t seed) {
    envs_.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      envs_.emplace_back(cfg, mode, Rng::mix(seed, static_cast<std::uint64_t>(i)));
    returns_.assign(static_cast<std::size_t>(count), 0.0);
  }

  explicit VecEnv(std::vector<Env> envs) : envs_(std::move(envs)) {
    if (envs_.empty()) throw std::invalid_argument("VecEnv: empty env list");
    returns_.assign(envs_.size(), 0.0);
  }

  int size() const { return static_cast<int>(envs_.size()); }
  const EnvConfig& config() const { return envs_.front().config(); }

  void start() {
    if (started_) return;
    obs_.clear();
    for (Env& e : envs_) obs_.push_back(e.reset());
    started_ = true;
  }

  // (E, H, W, C)
  Tensor obs_batch() const {
    const EnvConfig& c = config();
    Tensor out({size(), c.image, c.image, c.channels});
    const std::size_t stride = obs_.front().data.size();
    for (int e = 0; e < size(); ++e)
      std::copy_n(obs_[static_cast<std::size_t>(e)].data.begin(), stride,
                  out.data.begin() + static_cast<long>(stride) * e);
    return out;
  }

  struct StepBatch {
    std::vector<double> rewards;
    std::vector<std::uint8_t> dones;
  };

  StepBatch step(const std::vector<int>& actions) {
    StepBatch out;
    out.rewards.resize(envs_.size());
    out.dones.resize(envs_.size());
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      StepResult r = envs_[e].step(actions[e]);
      out.rewards[e] = r.reward;
      out.dones[e] = r.done ? 1 : 0;
      returns_[e] += r.reward;
      if (r.done) {
        finished_returns_.push_back(returns_[e]);
        returns_[e] = 0.0;
        obs_[e] = envs_[e].reset();
      } else {
        obs_[e] = std::move(r.obs);
      }
    }
    return out;
  }

  long long total_env_steps() const {
    long long n = 0;
    for (const Env& e : envs_) n += e.total_steps();
    return n;
  }

  std::vector<double> drain_episode_returns() {
    std::vector<double> out;
    out.swap(finished_returns_);
    return out;
  }

 private:
  std::vector<Env> envs_;
  std::vector<Tensor> obs_;
  std::vector<double> returns_;
  std::vector<double> finished_returns_;
  bool started_ = false;
};

struct RolloutBuffer {
  int num_envs = 0;
  int steps = 0;
  Tensor obs;  // (E*T, H, W, C), index e*T + t
  std::vector<int> actions;
  std::vector<double> raw_rewards;
  std::vector<double> rewards;  // normalized when enabled
  std::vector<double> logp_old;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> value_targets;
  std::vector<double> bootstrap_values;  // (E,)
  std::vector<double> episode_returns;   // raw undiscounted, completed this rollout

  int size() const { return num_envs * steps; }
  std::size_t idx(int e, int t) const {
    return static_cast<std::size_t>(e) * static_cast<std::size_t>(steps) +
           static_cast<std::size_t>(t);
  }

  // mean of (advantage + V) per sample == mean value target
  double mean_value_target() const {
    double s = 0.0;
    for (double v : value_targets) s += v;
    return s / static_cast<double>(value_targets.size());
  }

  Tensor obs_at(const std::vector<int>& indices) const {
    const std::size_t stride = static_cast<std::size_t>(obs.dim(1)) * obs.dim(2) * obs.dim(3);
    Tensor out({static_cast<int>(indices.size()), obs.dim(1), obs.dim(2), obs.dim(3)});
    for (std::size_t i = 0; i < indices.size(); ++i)
      std::copy_n(obs.data.begin() + static_cast<long>(stride) * indices[i], stride,
                  out.data.begin() + static_cast<long>(stride) * static_cast<long>(i));
    return out;
  }
};

inline int sample_categorical(const double* probs, int k, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (int i = 0; i < k; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return k - 1;
}

// Actions drawn from softmax(logits); logp_old and V recorded from the
// acting parameters; episodes auto-reset on done.
inline RolloutBuffer collect_rollout(const ParameterSet& params, const NetworkSpec& spec,
                                     VecEnv& envs, int steps, Rng& act_rng,
                                     RewardNormalizer* normalizer) {
  envs.start();
  const int E = envs.size();
  const EnvConfig& ec = envs.config();
  RolloutBuffer buf;
  buf.num_envs = E;
  buf.steps = steps;
  buf.obs = Tensor({E * steps, ec.image, ec.image, ec.channels});
  const std::size_t stride =
      static_cast<std::size_t>(ec.image) * ec.image * ec.channels;
  buf.actions.resize(static_cast<std::size_t>(E) * steps);
  buf.raw_rewards.resize(buf.actions.size());
  buf.rewards.resize(buf.actions.size());
  buf.logp_old.resize(buf.actions.size());
  buf.values.resize(buf.actions.size());
  buf.dones.resize(buf.actions.size());

  std::vector<int> acts(static_cast<std::size_t>(E));
  for (int t = 0; t < steps; ++t) {
    Tensor obs = envs.obs_batch();
    ActorCriticOutput out = forward(params, spec, obs);
    Tensor logp = kernels::log_softmax(out.logits);
    Tensor probs = logp;
    for (double& v : probs.data) v = std::exp(v);
    for (int e = 0; e < E; ++e) {
      const int a = sample_categorical(&probs.data[static_cast<std::size_t>(e) * spec.num_actions],
                                       spec.num_actions, act_rng);
      acts[static_cast<std::size_t>(e)] = a;
      const std::size_t i = buf.idx(e, t);
      buf.actions[i] = a;
      buf.logp_old[i] = logp.data[static_cast<std::size_t>(e) * spec.num_actions + a];
      buf.values[i] = out.values.data[static_cast<std::size_t>(e)];
      std::copy_n(obs.data.begin() + static_cast<long>(stride) * e, stride,
                  buf.obs.data.begin() + static_cast<long>(stride * i));
    }
    VecEnv::StepBatch sb = envs.step(acts);
    for (int e = 0; e < E; ++e) {
      const std::size_t i = buf.idx(e, t);
      buf.raw_rewards[i] = sb.rewards[static_cast<std::size_t>(e)];
      buf.dones[i] = sb.dones[static_cast<std::size_t>(e)];
      buf.rewards[i] = normalizer
                           ? normalizer->process(e, sb.rewards[static_cast<std::size_t>(e)],
                                                 sb.dones[static_cast<std::size_t>(e)] != 0)
                           : sb.rewards[static_cast<std::size_t>(e)];
    }
  }
  ActorCriticOutput tail = forward(params, spec, envs.obs_batch());
  buf.bootstrap_values.assign(tail.values.data.begin(), tail.values.data.end());
  buf.episode_returns = envs.drain_episode_returns();
  return buf;
}

// Backward recursion; episode cuts mask both the bootstrap and the decay.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lam) {
  buf.advantages.assign(buf.rewards.size(), 0.0);
  buf.value_targets.assign(buf.rewards.size(), 0.0);
  for (int e = 0; e < buf.num_envs; ++e) {
    double carry = 0.0;
    for (int t = buf.steps - 1; t >= 0; --t) {
      const std::size_t i = buf.idx(e, t);
      const double nonterm = buf.dones[i] ? 0.0 : 1.0;
      const double next_v = (t == buf.steps - 1)
                                ? buf.bootstrap_values[static_cast<std::size_t>(e)]
                                : buf.values[i + 1];
      const double delta = buf.rewards[i] + gamma * next_v * nonterm - buf.values[i];
      carry = delta + gamma * lam * nonterm * carry;
      buf.advantages[i] = carry;
      buf.value_targets[i] = carry + buf.values[i];
    }
  }
}

struct Minibatch {
  Tensor obs;
  std::vector<int> actions;
  Tensor adv_norm;   // (M,) normalized per minibatch
  Tensor vtarg;      // (M,)
  Tensor logp_old;   // (M,)
};

inline Minibatch make_minibatch(const RolloutBuffer& buf, const std::vector<int>& indices) {
  Minibatch mb;
  const int m = static_cast<int>(indices.size());
  mb.obs = buf.obs_at(indices);
  mb.actions.resize(static_cast<std::size_t>(m));
  mb.adv_norm = Tensor({m});
  mb.vtarg = Tensor({m});
  mb.logp_old = Tensor({m});
  double mean = 0.0;
  for (int i = 0; i < m; ++i) mean += buf.advantages[static_cast<std::size_t>(indices[i])];
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (int i = 0; i < m; ++i) {
    const double d = buf.advantages[static_cast<std::size_t>(indices[i])] - mean;
    var += d * d;
  }
  const double inv_std = 1.0 / (std::sqrt(var / static_cast<double>(m)) + 1e-8);
  for (int i = 0; i < m; ++i) {
    const std::size_t src = static_cast<std::size_t>(indices[i]);
    mb.actions[static_cast<std::size_t>(i)] = buf.actions[src];
    mb.adv_norm.data[static_cast<std::size_t>(i)] = (buf.advantages[src] - mean) * inv_std;
    mb.vtarg.data[static_cast<std::size_t>(i)] = buf.value_targets[src];
    mb.logp_old.data[static_cast<std::size_t>(i)] = buf.logp_old[src];
  }
  return mb;
}

inline std::vector<std::vector<int>> split_minibatches(int n, int k, Rng& shuffle_rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);
  std::vector<std::vector<int>> chunks(static_cast<std::size_t>(k));
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int c = 0; c < k; ++c) {
    const int len = base + (c < extra ? 1 : 0);
    chunks[static_cast<std::size_t>(c)].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  return chunks;
}

struct PpoLossParts {
  double total = 0.0;
  double policy = 0.0;  // the clipped objective (to be maximized)
  double value = 0.0;
  double entropy = 0.0;
};

// loss = -E[min(rho A, clip(rho) A)] + c_v E[(V - V^targ)^2] - c_e E[H]
inline Var build_ppo_loss(Tape& tape, const TapedNet& net, const Minibatch& mb,
                          const PPOConfig& cfg, PpoLossParts* parts = nullptr) {
  Var logp = tape.gather_logp(net.logits, mb.actions);
  Var ratio = tape.exp(tape.sub_const(logp, mb.logp_old));
  Var surr1 = tape.mul_const(ratio, mb.adv_norm);
  Var surr2 = tape.mul_const(tape.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps),
                             mb.adv_norm);
  Var policy_obj = tape.mean(tape.minimum(surr1, surr2));
  Var vloss = tape.mse_const_mean(net.values, mb.vtarg);
  Var ent = tape.entropy_mean(net.logits);
  Var loss = tape.add(tape.add(tape.scale(policy_obj, -1.0), tape.scale(vloss, cfg.value_coef)),
                      tape.scale(ent, -cfg.entropy_coef));
  const double lv = tape.value(loss).data[0];
  if (!std::isfinite(lv)) throw std::runtime_error("ppo loss is not finite");
  if (parts) {
    parts->total = lv;
    parts->policy = tape.value(policy_obj).data[0];
    parts->value = tape.value(vloss).data[0];
    parts->entropy = tape.value(ent).data[0];
  }
  return loss;
}

// `epochs` shuffled passes of `minibatches` chunks; one adam step per chunk.
// Returns loss parts averaged over all updates.
inline PpoLossParts ppo_update(ParameterSet& params, AdamState& adam, const NetworkSpec& spec,
                               const RolloutBuffer& buf, const PPOConfig& cfg,
                               Rng& shuffle_rng) {
  PpoLossParts acc;
  int updates = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto chunks = split_minibatches(buf.size(), cfg.minibatches, shuffle_rng);
    for (const auto& chunk : chunks) {
      Minibatch mb = make_minibatch(buf, chunk);
      Tape tape;
      TapedNet net = forward_tape(tape, params, spec, mb.obs);
      PpoLossParts parts;
      Var loss = build_ppo_loss(tape, net, mb, cfg, &parts);
      tape.backward(loss);
      GradientSet grads = extract_grads(tape, net, params);
      adam_step(params, grads, adam, cfg.lr);
      acc.total += parts.total;
      acc.policy += parts.policy;
      acc.value += parts.value;
      acc.entropy += parts.entropy;
      ++updates;
    }
  }
  if (updates > 0) {
    acc.total /= updates;
    acc.policy /= updates;
    acc.value /= updates;
    acc.entropy /= updates;
  }
  return acc;
}

}  // namespace augsched
