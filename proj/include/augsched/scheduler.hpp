#pragma once

#include <deque>
#include <string>
#include <vector>

#include "augsched/bandit.hpp"
#include "augsched/distill.hpp"
#include "augsched/evaluate.hpp"
#include "augsched/pagrad.hpp"
#include "augsched/ppo.hpp"

// Training-loop orchestration. One run owns its parameter set, env streams
// and rng streams; every stochastic subsystem draws from its own labeled
// stream so degenerate configurations collapse onto plain PPO bit-exactly.

namespace augsched {

enum class Method { ppo, rad, drac, drac_pagrad, inda, exda, ucb_inda, ucb_exda };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::ppo: return "ppo";
    case Method::rad: return "rad";
    case Method::drac: return "drac";
    case Method::drac_pagrad: return "drac_pagrad";
    case Method::inda: return "inda";
    case Method::exda: return "exda";
    case Method::ucb_inda: return "ucb_inda";
    case Method::ucb_exda: return "ucb_exda";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::ppo, Method::rad, Method::drac, Method::drac_pagrad, Method::inda,
                   Method::exda, Method::ucb_inda, Method::ucb_exda})
    if (s == method_name(m)) return m;
  throw std::invalid_argument("unknown method tag: " + s);
}

// Observation store over the last `capacity` rollouts.
class ObsRing {
 public:
  explicit ObsRing(int capacity) : capacity_(capacity) {}

  void push(const Tensor& rollout_obs) {
    rollouts_.push_back(rollout_obs);
    while (static_cast<int>(rollouts_.size()) > capacity_) rollouts_.pop_front();
  }

  bool empty() const { return rollouts_.empty(); }

  Tensor packed() const {
    if (rollouts_.empty()) throw std::logic_error("ObsRing: empty");
    int total = 0;
    for (const Tensor& t : rollouts_) total += t.dim(0);
    const Tensor& f = rollouts_.front();
    Tensor out({total, f.dim(1), f.dim(2), f.dim(3)});
    const std::size_t stride = static_cast<std::size_t>(f.dim(1)) * f.dim(2) * f.dim(3);
    std::size_t at = 0;
    for (const Tensor& t : rollouts_) {
      std::copy_n(t.data.begin(), t.data.size(), out.data.begin() + static_cast<long>(at));
      at += t.data.size();
    }
    return out;
  }

 private:
  int capacity_;
  std::deque<Tensor> rollouts_;
};

struct TrainSetup {
  EnvConfig env;
  NetworkSpec net;
  double init_scale = 0.05;
  PPOConfig ppo;
  DAConfig da;
  BanditConfig bandit;
  int total_epochs = 200;
  Method method = Method::ppo;
  double drac_alpha = 0.1;
  bool pagrad_per_layer = false;
  bool ucb_require_identity = true;  // cleared only for the identity-arm ablation
  std::vector<AugmentationSpec> augmentations;
  int eval_cadence = 10;
  int eval_episodes = 50;

  void validate() const {
    env.validate();
    net.validate();
    ppo.validate();
    da.validate();
    bandit.validate();
    if (total_epochs < 0) throw std::invalid_argument("TrainSetup: negative epoch count");
    if (eval_cadence < 1 || eval_episodes < 1)
      throw std::invalid_argument("TrainSetup: bad evaluation settings");
    if (da.window_end > total_epochs)
      throw std::invalid_argument("TrainSetup: DA window exceeds the epoch range");
    const bool needs_phi = method == Method::rad || method == Method::drac ||
                           method == Method::drac_pagrad || method == Method::inda ||
                           method == Method::exda || method == Method::ucb_inda ||
                           method == Method::ucb_exda;
    if (needs_phi && augmentations.empty())
      throw std::invalid_argument("TrainSetup: method requires an augmentation list");
    for (const AugmentationSpec& a : augmentations) a.validate();
  }
};

struct EvalPoint {
  long long steps = 0;
  int epoch = 0;
  double train_ret = 0.0;
  double test_bg_ret = 0.0;
  double test_lv_ret = 0.0;
  double loss_pi = 0.0;
  double loss_v = 0.0;
  double entropy = 0.0;
  double loss_da = 0.0;
  double policy_distance = 0.0;
  int da_phase = 0;  // 1 when a DA phase ran since the previous row
};

struct RunCounters {
  long long env_steps = 0;
  long long exda_fill_steps = 0;
  int rollouts = 0;
  int da_phases = 0;
  long long updates = 0;
};

struct RunResult {
  ParameterSet params;
  AdamState adam;
  std::vector<EvalPoint> evals;
  std::vector<GainRecord> gain_log;
  std::vector<std::string> arm_names;
  std::vector<PhaseStats> phases;  // one entry per executed DA phase
  RunCounters counters;
};

// ---- per-rollout update variants ----

// PPO fed with original and augmented observations: each minibatch sample is
// replaced by phi(o) with probability 1/2; actions, advantages and logp_old
// are untouched.
inline PpoLossParts rad_update(ParameterSet& params, AdamState& adam, const NetworkSpec& spec,
                               const RolloutBuffer& buf, const PPOConfig& cfg,
                               const AugmentationSpec& phi, Rng& shuffle_rng, Rng& rad_rng) {
  PpoLossParts acc;
  int updates = 0;
  const std::size_t stride =
      static_cast<std::size_t>(buf.obs.dim(1)) * buf.obs.dim(2) * buf.obs.dim(3);
  Tensor img({buf.obs.dim(1), buf.obs.dim(2), buf.obs.dim(3)});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto chunks = split_minibatches(buf.size(), cfg.minibatches, shuffle_rng);
    for (const auto& chunk : chunks) {
      Minibatch mb = make_minibatch(buf, chunk);
      for (int i = 0; i < mb.obs.dim(0); ++i) {
        if (!rad_rng.coin()) continue;
        std::copy_n(mb.obs.data.begin() + static_cast<long>(stride) * i, stride,
                    img.data.begin());
        Rng child(rad_rng.next_u64());
        Tensor t = apply(phi, img, child);
        std::copy_n(t.data.begin(), stride, mb.obs.data.begin() + static_cast<long>(stride) * i);
      }
      Tape tape;
      TapedNet net = forward_tape(tape, params, spec, mb.obs);
      PpoLossParts parts;
      Var loss = build_ppo_loss(tape, net, mb, cfg, &parts);
      tape.backward(loss);
      adam_step(params, extract_grads(tape, net, params), adam, cfg.lr);
      acc.total += parts.total;
      acc.policy += parts.policy;
      acc.value += parts.value;
      acc.entropy += parts.entropy;
      ++updates;
    }
  }
  if (updates) {
    acc.total /= updates;
    acc.policy /= updates;
    acc.value /= updates;
    acc.entropy /= updates;
  }
  return acc;
}

// Detached self-targets for the regularizer: the current responses to the
// original observations act as constants within the step.
struct DracTargets {
  Tensor probs;
  Tensor values;
};

inline DracTargets drac_targets(const ParameterSet& params, const NetworkSpec& spec,
                                const Tensor& obs) {
  ActorCriticOutput out = forward(params, spec, obs);
  return DracTargets{kernels::softmax(out.logits), out.values};
}

// Single combined loss L_PPO + alpha_r * L_dis(theta, phi; theta) with
// stop-gradient targets on the original branch.
inline PpoLossParts drac_update(ParameterSet& params, AdamState& adam, const NetworkSpec& spec,
                                const RolloutBuffer& buf, const PPOConfig& cfg, double alpha_r,
                                const AugmentationSpec& phi, Rng& shuffle_rng, Rng& aug_rng) {
  PpoLossParts acc;
  int updates = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto chunks = split_minibatches(buf.size(), cfg.minibatches, shuffle_rng);
    for (const auto& chunk : chunks) {
      Minibatch mb = make_minibatch(buf, chunk);
      Tape tape;
      std::vector<Var> leaves = make_param_leaves(tape, params);
      TapedNet net = forward_with_leaves(tape, leaves, params, spec, mb.obs);
      PpoLossParts parts;
      Var loss = build_ppo_loss(tape, net, mb, cfg, &parts);
      if (alpha_r != 0.0) {
        DracTargets targets = drac_targets(params, spec, mb.obs);
        Tensor aug = batch_apply_packed(phi, mb.obs, aug_rng);
        TapedNet on_aug = forward_with_leaves(tape, leaves, params, spec, aug);
        Var reg = build_l_dis_term(tape, on_aug, targets.probs, targets.values, true);
        loss = tape.add(loss, tape.scale(reg, alpha_r));
      }
      tape.backward(loss);
      adam_step(params, extract_grads(tape, net, params), adam, cfg.lr);
      acc.total += tape.value(loss).data[0];
      acc.policy += parts.policy;
      acc.value += parts.value;
      acc.entropy += parts.entropy;
      ++updates;
    }
  }
  if (updates) {
    acc.total /= updates;
    acc.policy /= updates;
    acc.value /= updates;
    acc.entropy /= updates;
  }
  return acc;
}

// g_main and g_aux computed separately per minibatch, combined with the
// conflict-deleting projection, one optimizer step on the result.
inline PpoLossParts drac_pagrad_update(ParameterSet& params, AdamState& adam,
                                       const NetworkSpec& spec, const RolloutBuffer& buf,
                                       const PPOConfig& cfg, double alpha_r,
                                       const AugmentationSpec& phi, bool per_layer,
                                       Rng& shuffle_rng, Rng& aug_rng) {
  PpoLossParts acc;
  int updates = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto chunks = split_minibatches(buf.size(), cfg.minibatches, shuffle_rng);
    for (const auto& chunk : chunks) {
      Minibatch mb = make_minibatch(buf, chunk);
      Tape main_tape;
      TapedNet main_net = forward_tape(main_tape, params, spec, mb.obs);
      PpoLossParts parts;
      Var main_loss = build_ppo_loss(main_tape, main_net, mb, cfg, &parts);
      main_tape.backward(main_loss);
      GradientSet g_main = extract_grads(main_tape, main_net, params);

      GradientSet combined = g_main;
      if (alpha_r != 0.0) {
        DracTargets targets = drac_targets(params, spec, mb.obs);
        Tensor aug = batch_apply_packed(phi, mb.obs, aug_rng);
        Tape aux_tape;
        TapedNet aux_net = forward_tape(aux_tape, params, spec, aug);
        Var aux_loss = aux_tape.scale(
            build_l_dis_term(aux_tape, aux_net, targets.probs, targets.values, true), alpha_r);
        aux_tape.backward(aux_loss);
        GradientSet g_aux = extract_grads(aux_tape, aux_net, params);
        combined = pagrad_combine(g_main, g_aux, per_layer);
        if (!per_layer) {
          // applied auxiliary part never opposes the main direction
          double adj_dot = 0.0, n2 = 0.0;
          for (std::size_t t = 0; t < combined.tensors.size(); ++t)
            for (std::size_t j = 0; j < combined.tensors[t].data.size(); ++j) {
              const double m = g_main.tensors[t].data[j];
              adj_dot += (combined.tensors[t].data[j] - m) * m;
              n2 += m * m;
            }
          if (adj_dot < -1e-12 * std::max(1.0, n2))
            throw std::runtime_error("drac_pagrad_update: projected aux opposes the main gradient");
        }
      }
      adam_step(params, combined, adam, cfg.lr);
      acc.total += parts.total;
      acc.policy += parts.policy;
      acc.value += parts.value;
      acc.entropy += parts.entropy;
      ++updates;
    }
  }
  if (updates) {
    acc.total /= updates;
    acc.policy /= updates;
    acc.value /= updates;
    acc.entropy /= updates;
  }
  return acc;
}

namespace detail_sched {

inline int find_identity_arm(const std::vector<AugmentationSpec>& phis) {
  for (std::size_t i = 0; i < phis.size(); ++i)
    if (phis[i].kind == AugKind::identity) return static_cast<int>(i);
  return -1;
}

inline std::vector<AugmentationSpec> without_identity(const std::vector<AugmentationSpec>& phis) {
  std::vector<AugmentationSpec> out;
  for (const AugmentationSpec& p : phis)
    if (p.kind != AugKind::identity) out.push_back(p);
  return out;
}

}  // namespace detail_sched

// Unified training driver behind the run_* entry points. All methods share
// the identical PPO path; DA scheduling, bandit selection and post-training
// distillation are layered on top of it.
inline RunResult run_training(const TrainSetup& setup, std::uint64_t run_seed) {
  setup.validate();
  const bool is_ucb = setup.method == Method::ucb_inda || setup.method == Method::ucb_exda;
  const bool has_inda_window = setup.method == Method::inda || is_ucb;
  if (is_ucb && setup.ucb_require_identity &&
      detail_sched::find_identity_arm(setup.augmentations) < 0)
    throw std::invalid_argument("UCB scheduling requires the identity arm");

  Rng root(run_seed);
  RunResult out;
  out.params = init_params(setup.net, run_seed, setup.init_scale);
  out.adam = AdamState::init(out.params);

  VecEnv envs(setup.env, EnvMode::easybg, setup.ppo.num_envs,
              root.derive("train-envs").state());
  Rng act = root.derive("act");
  Rng shuffle = root.derive("shuffle");
  Rng aug_rl = root.derive("aug-rl");
  Rng rad_coin = root.derive("rad-coin");
  Rng aug_da = root.derive("aug-da");
  Rng eval_root = root.derive("eval");
  RewardNormalizer norm(setup.ppo.num_envs, setup.ppo.gamma);

  ObsRing ring(setup.da.interval);
  BanditState bandit;
  std::vector<int> arm_of_round;
  std::vector<SelectResult> selection_of_round;
  std::vector<double> gain_of_round;
  std::vector<double> interval_returns;
  double last_rollout_return = 0.0;
  if (is_ucb) {
    std::vector<std::string> names;
    for (const AugmentationSpec& p : setup.augmentations) names.push_back(aug_name(p.kind));
    bandit = BanditState::init(names, detail_sched::find_identity_arm(setup.augmentations),
                               setup.bandit);
    out.arm_names = names;
  }

  const AugmentationSpec* diag_phi = nullptr;
  for (const AugmentationSpec& p : setup.augmentations)
    if (p.kind != AugKind::identity) {
      diag_phi = &p;
      break;
    }

  double last_da_loss = 0.0;
  bool da_since_eval = false;

  auto log_eval = [&](int epoch, const PpoLossParts& losses) {
    EvalPoint p;
    p.steps = envs.total_env_steps();
    p.epoch = epoch;
    const std::uint64_t es = eval_root.derive(static_cast<std::uint64_t>(epoch)).state();
    p.train_ret = evaluate(out.params, setup.net, setup.env, EnvMode::easybg,
                           setup.eval_episodes, Rng::mix(es, 0));
    p.test_bg_ret = evaluate(out.params, setup.net, setup.env, EnvMode::test_bg,
                             setup.eval_episodes, Rng::mix(es, 1));
    p.test_lv_ret = evaluate(out.params, setup.net, setup.env, EnvMode::test_lv,
                             setup.eval_episodes, Rng::mix(es, 2));
    p.loss_pi = losses.policy;
    p.loss_v = losses.value;
    p.entropy = losses.entropy;
    p.loss_da = last_da_loss;
    if (diag_phi && !ring.empty()) {
      Rng pd_rng = eval_root.derive(static_cast<std::uint64_t>(epoch)).derive("pd");
      p.policy_distance = policy_distance(out.params, setup.net, ring.packed(), *diag_phi, pd_rng);
    }
    p.da_phase = da_since_eval ? 1 : 0;
    da_since_eval = false;
    out.evals.push_back(p);
  };

  PpoLossParts losses;
  for (int epoch = 1; epoch <= setup.total_epochs; ++epoch) {
    RolloutBuffer buf = collect_rollout(out.params, setup.net, envs, setup.ppo.rollout_steps, act,
                                        setup.ppo.reward_norm ? &norm : nullptr);
    compute_gae(buf, setup.ppo.gamma, setup.ppo.lam);
    switch (setup.method) {
      case Method::rad:
        losses = rad_update(out.params, out.adam, setup.net, buf, setup.ppo,
                            setup.augmentations.front(), shuffle, rad_coin);
        break;
      case Method::drac:
        losses = drac_update(out.params, out.adam, setup.net, buf, setup.ppo, setup.drac_alpha,
                             setup.augmentations.front(), shuffle, aug_rl);
        break;
      case Method::drac_pagrad:
        losses = drac_pagrad_update(out.params, out.adam, setup.net, buf, setup.ppo,
                                    setup.drac_alpha, setup.augmentations.front(),
                                    setup.pagrad_per_layer, shuffle, aug_rl);
        break;
      default:
        losses = ppo_update(out.params, out.adam, setup.net, buf, setup.ppo, shuffle);
        break;
    }
    out.counters.rollouts += 1;
    out.counters.updates += static_cast<long long>(setup.ppo.epochs) * setup.ppo.minibatches;

    if (has_inda_window) {
      ring.push(buf.obs);
      interval_returns.push_back(buf.mean_value_target());
      last_rollout_return = interval_returns.back();
      const bool da_point = epoch >= setup.da.window_start && epoch <= setup.da.window_end &&
                            (epoch - 1) % setup.da.interval == 0;
      if (da_point) {
        if (setup.method == Method::inda) {
          PhaseStats st = da_phase(out.params, setup.net, ring.packed(),
                                   setup.augmentations.front(), setup.da, aug_da);
          last_da_loss = st.mean_loss;
          out.phases.push_back(st);
          out.counters.da_phases += 1;
          da_since_eval = true;
        } else {  // ucb_inda / ucb_exda
          if (!arm_of_round.empty()) {
            const double g = compute_gain(interval_returns);
            bandit.record_gain(arm_of_round.back(), g);
            gain_of_round.push_back(g);
          }
          SelectResult sel = ucb_select(bandit, bandit.rounds);
          bandit.commit(sel.arm);
          arm_of_round.push_back(sel.arm);
          selection_of_round.push_back(sel);
          interval_returns.clear();
          if (sel.arm != bandit.identity_arm) {
            PhaseStats st =
                da_phase(out.params, setup.net, ring.packed(),
                         setup.augmentations[static_cast<std::size_t>(sel.arm)], setup.da, aug_da);
            last_da_loss = st.mean_loss;
            out.phases.push_back(st);
            out.counters.da_phases += 1;
            da_since_eval = true;
          }
        }
      }
    }

    if (epoch % setup.eval_cadence == 0 || epoch == setup.total_epochs) log_eval(epoch, losses);
  }

  // close the final bandit round; when the last DA point fell on the final
  // epoch, its own rollout return stands in for the missing interval
  if (is_ucb && !arm_of_round.empty()) {
    if (interval_returns.empty()) interval_returns.push_back(last_rollout_return);
    const double g = compute_gain(interval_returns);
    bandit.record_gain(arm_of_round.back(), g);
    gain_of_round.push_back(g);
    for (std::size_t r = 0; r < arm_of_round.size(); ++r) {
      GainRecord rec;
      rec.round = static_cast<int>(r);
      rec.arm = arm_of_round[r];
      rec.forced = selection_of_round[r].forced;
      rec.scores = selection_of_round[r].scores;
      rec.gain = gain_of_round[r];
      out.gain_log.push_back(rec);
    }
  }

  // post-training distillation stage
  if (setup.method == Method::exda || setup.method == Method::ucb_exda) {
    std::vector<AugmentationSpec> phis = setup.method == Method::ucb_exda
                                             ? detail_sched::without_identity(setup.augmentations)
                                             : setup.augmentations;
    if (phis.empty()) phis.push_back(AugmentationSpec::of(AugKind::identity));
    VecEnv fill(setup.env, EnvMode::easybg, setup.ppo.num_envs,
                root.derive("exda-fill-envs").state());
    Rng fill_act = root.derive("exda-act");
    DistillRunStats st = exda(out.params, setup.net, fill, phis, setup.da, fill_act, aug_da);
    out.counters.exda_fill_steps = st.fill_env_steps;
    last_da_loss = st.final_loss;
    da_since_eval = st.updates > 0;
    if (setup.total_epochs > 0 || st.updates > 0) log_eval(setup.total_epochs + 1, losses);
  }

  out.counters.env_steps = envs.total_env_steps();
  return out;
}

inline RunResult run_inda(TrainSetup setup, const AugmentationSpec& phi, std::uint64_t seed) {
  setup.method = Method::inda;
  setup.augmentations = {phi};
  return run_training(setup, seed);
}

inline RunResult run_exda_pipeline(TrainSetup setup, std::vector<AugmentationSpec> phi_set,
                                   std::uint64_t seed) {
  setup.method = Method::exda;
  setup.augmentations = std::move(phi_set);
  return run_training(setup, seed);
}

inline RunResult run_ucb_inda(TrainSetup setup, std::vector<AugmentationSpec> arms,
                              std::uint64_t seed) {
  setup.method = Method::ucb_inda;
  setup.augmentations = std::move(arms);
  return run_training(setup, seed);
}

inline RunResult run_ucb_exda(TrainSetup setup, std::vector<AugmentationSpec> arms,
                              std::uint64_t seed) {
  setup.method = Method::ucb_exda;
  setup.augmentations = std::move(arms);
  return run_training(setup, seed);
}

}  // namespace augsched
