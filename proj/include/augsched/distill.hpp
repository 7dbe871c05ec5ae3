#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "augsched/adam.hpp"
#include "augsched/augment.hpp"
#include "augsched/autodiff.hpp"
#include "augsched/divergence.hpp"
#include "augsched/network.hpp"
#include "augsched/ppo.hpp"

// Response-preserving distillation: a frozen teacher snapshot anchors the
// student on original observations while the consistency prior is infused
// through augmented ones. Teacher targets are cached once per phase and
// never recomputed mid-phase.

namespace augsched {

struct DAConfig {
  double lr = 1e-4;      // distillation learning rate
  int epochs = 3;        // passes per phase, augmented set re-sampled each pass
  int interval = 5;      // PPO epochs between phases
  int window_start = 0;  // S
  int window_end = 0;    // T
  int minibatch = 256;
  bool include_value_term = true;
  double anchor_kl_threshold = 0.05;

  int exda_buffer = 20000;
  int exda_epochs = 30;
  int exda_minibatch = 256;
  int exda_minibatches_per_epoch = 0;  // 0 = one full pass over the buffer
  double exda_lr = 1e-3;
  bool exda_include_value_term = false;
  bool exda_reinit = false;
  int exda_refresh_epochs = 3;  // augmented buffer refresh cadence

  void validate() const {
    if (window_start > window_end) throw std::invalid_argument("DAConfig: S > T");
    if (interval < 1) throw std::invalid_argument("DAConfig: interval must be >= 1");
    if (epochs < 0 || exda_epochs < 0) throw std::invalid_argument("DAConfig: negative epochs");
    if (minibatch < 1 || exda_minibatch < 1 || exda_buffer < 1 || exda_refresh_epochs < 1)
      throw std::invalid_argument("DAConfig: bad sizes");
    if (lr <= 0.0 || exda_lr <= 0.0) throw std::invalid_argument("DAConfig: bad learning rate");
  }
};

// Cached responses of a frozen snapshot: D_Pi as probabilities plus logits,
// D_V as scalars.
struct TeacherCache {
  Tensor probs;   // (N, |A|)
  Tensor logits;  // (N, |A|)
  std::vector<double> values;

  static TeacherCache build(const ParameterSet& teacher, const NetworkSpec& spec,
                            const Tensor& obs, int batch = 256) {
    const int n = obs.dim(0);
    TeacherCache c;
    c.probs = Tensor({n, spec.num_actions});
    c.logits = Tensor({n, spec.num_actions});
    c.values.resize(static_cast<std::size_t>(n));
    const std::size_t stride = static_cast<std::size_t>(obs.dim(1)) * obs.dim(2) * obs.dim(3);
    for (int at = 0; at < n; at += batch) {
      const int m = std::min(batch, n - at);
      Tensor chunk({m, obs.dim(1), obs.dim(2), obs.dim(3)});
      std::copy_n(obs.data.begin() + static_cast<long>(stride) * at, stride * m,
                  chunk.data.begin());
      ActorCriticOutput out = forward(teacher, spec, chunk);
      Tensor probs = kernels::softmax(out.logits);
      std::copy_n(out.logits.data.begin(), static_cast<std::size_t>(m) * spec.num_actions,
                  c.logits.data.begin() + static_cast<long>(at) * spec.num_actions);
      std::copy_n(probs.data.begin(), static_cast<std::size_t>(m) * spec.num_actions,
                  c.probs.data.begin() + static_cast<long>(at) * spec.num_actions);
      std::copy_n(out.values.data.begin(), m, c.values.begin() + at);
    }
    return c;
  }

  Tensor probs_at(const std::vector<int>& indices, int num_actions) const {
    Tensor out({static_cast<int>(indices.size()), num_actions});
    for (std::size_t i = 0; i < indices.size(); ++i)
      std::copy_n(probs.data.begin() + static_cast<long>(indices[i]) * num_actions, num_actions,
                  out.data.begin() + static_cast<long>(i) * num_actions);
    return out;
  }

  Tensor values_at(const std::vector<int>& indices) const {
    Tensor out({static_cast<int>(indices.size())});
    for (std::size_t i = 0; i < indices.size(); ++i)
      out.data[i] = values[static_cast<std::size_t>(indices[i])];
    return out;
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (double v : probs.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      h = Rng::mix(h, bits);
    }
    for (double v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      h = Rng::mix(h, bits);
    }
    return h;
  }
};

inline Tensor slice_rows(const Tensor& batch, const std::vector<int>& indices) {
  const std::size_t stride =
      static_cast<std::size_t>(batch.dim(1)) * batch.dim(2) * batch.dim(3);
  Tensor out({static_cast<int>(indices.size()), batch.dim(1), batch.dim(2), batch.dim(3)});
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(batch.data.begin() + static_cast<long>(stride) * indices[i], stride,
                out.data.begin() + static_cast<long>(stride) * static_cast<long>(i));
  return out;
}

// One distillation term against the frozen teacher:
// KL[teacher(o) || student(x)] (+ (V_teacher(o) - V_student(x))^2).
inline Var build_l_dis_term(Tape& tape, const TapedNet& student, const Tensor& teacher_probs,
                            const Tensor& teacher_values, bool include_value) {
  Var loss = tape.kl_const_teacher_mean(teacher_probs, student.logits);
  if (include_value)
    loss = tape.add(loss, tape.mse_const_mean(student.values, teacher_values));
  return loss;
}

// Value of L_dis(theta, x; theta_old) with cached teacher targets.
inline double l_dis_value(const ParameterSet& student, const NetworkSpec& spec,
                          const Tensor& teacher_probs, const std::vector<double>& teacher_values,
                          const Tensor& inputs, bool include_value) {
  ActorCriticOutput out = forward(student, spec, inputs);
  Tensor lsq = kernels::log_softmax(out.logits);
  const int n = inputs.dim(0), k = spec.num_actions;
  double kl = 0.0, mse = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < k; ++a) {
      const std::size_t off = static_cast<std::size_t>(i) * k + a;
      const double p = teacher_probs.data[off];
      if (p > 0.0) kl += p * (std::log(p) - lsq.data[off]);
    }
    const double dv = teacher_values[static_cast<std::size_t>(i)] -
                      out.values.data[static_cast<std::size_t>(i)];
    mse += dv * dv;
  }
  return kl / n + (include_value ? mse / n : 0.0);
}

// Self-inconsistency between a network's own responses to original and
// augmented inputs (no anchor).
inline double self_inconsistency(const ParameterSet& params, const NetworkSpec& spec,
                                 const Tensor& obs, const Tensor& aug_obs, bool include_value,
                                 int batch = 256) {
  const int n = obs.dim(0), k = spec.num_actions;
  const std::size_t stride = static_cast<std::size_t>(obs.dim(1)) * obs.dim(2) * obs.dim(3);
  double kl = 0.0, mse = 0.0;
  for (int at = 0; at < n; at += batch) {
    const int m = std::min(batch, n - at);
    Tensor c1({m, obs.dim(1), obs.dim(2), obs.dim(3)});
    Tensor c2 = c1;
    std::copy_n(obs.data.begin() + static_cast<long>(stride) * at, stride * m, c1.data.begin());
    std::copy_n(aug_obs.data.begin() + static_cast<long>(stride) * at, stride * m,
                c2.data.begin());
    ActorCriticOutput o1 = forward(params, spec, c1);
    ActorCriticOutput o2 = forward(params, spec, c2);
    for (int i = 0; i < m; ++i) {
      std::span<const double> p(&o1.logits.data[static_cast<std::size_t>(i) * k],
                                static_cast<std::size_t>(k));
      std::span<const double> q(&o2.logits.data[static_cast<std::size_t>(i) * k],
                                static_cast<std::size_t>(k));
      kl += kl_categorical(p, q);
      const double dv = o1.values.data[static_cast<std::size_t>(i)] -
                        o2.values.data[static_cast<std::size_t>(i)];
      mse += dv * dv;
    }
  }
  return kl / n + (include_value ? mse / n : 0.0);
}

// Mean JS divergence between responses to o and a fresh phi(o) per
// observation.
inline double policy_distance(const ParameterSet& params, const NetworkSpec& spec,
                              const Tensor& obs, const AugmentationSpec& phi, Rng& rng,
                              int batch = 256) {
  if (obs.dim(0) < 1) throw std::invalid_argument("policy_distance: empty observation set");
  Tensor aug = batch_apply_packed(phi, obs, rng);
  const int n = obs.dim(0), k = spec.num_actions;
  const std::size_t stride = static_cast<std::size_t>(obs.dim(1)) * obs.dim(2) * obs.dim(3);
  double total = 0.0;
  for (int at = 0; at < n; at += batch) {
    const int m = std::min(batch, n - at);
    Tensor c1({m, obs.dim(1), obs.dim(2), obs.dim(3)});
    Tensor c2 = c1;
    std::copy_n(obs.data.begin() + static_cast<long>(stride) * at, stride * m, c1.data.begin());
    std::copy_n(aug.data.begin() + static_cast<long>(stride) * at, stride * m, c2.data.begin());
    ActorCriticOutput o1 = forward(params, spec, c1);
    ActorCriticOutput o2 = forward(params, spec, c2);
    for (int i = 0; i < m; ++i) {
      std::span<const double> p(&o1.logits.data[static_cast<std::size_t>(i) * k],
                                static_cast<std::size_t>(k));
      std::span<const double> q(&o2.logits.data[static_cast<std::size_t>(i) * k],
                                static_cast<std::size_t>(k));
      total += js_distance(p, q);
    }
  }
  return total / n;
}

struct PhaseStats {
  double pre_self_inconsistency = 0.0;
  double post_self_inconsistency = 0.0;
  double anchor_kl = 0.0;
  double pre_policy_distance = 0.0;
  double post_policy_distance = 0.0;
  double mean_loss = 0.0;
  int updates = 0;
  std::uint64_t teacher_fingerprint_before = 0;
  std::uint64_t teacher_fingerprint_after = 0;
};

// One DA phase: snapshot the teacher, cache its targets once, then run
// `epochs` passes re-sampling the augmented buffer each pass.
inline PhaseStats da_phase(ParameterSet& params, const NetworkSpec& spec, const Tensor& obs,
                           const AugmentationSpec& phi, const DAConfig& cfg, Rng& aug_rng) {
  cfg.validate();
  if (obs.rank() != 4 || obs.dim(0) < 1) throw std::invalid_argument("da_phase: empty buffer");
  const int n = obs.dim(0);

  const ParameterSet teacher = params;  // theta_old
  TeacherCache cache = TeacherCache::build(teacher, spec, obs);
  PhaseStats stats;
  stats.teacher_fingerprint_before = cache.fingerprint();

  Rng measure_rng = aug_rng.derive("measure");
  Tensor measure_aug = batch_apply_packed(phi, obs, measure_rng);
  stats.pre_self_inconsistency = self_inconsistency(params, spec, obs, measure_aug, true);
  {
    Rng js_rng = aug_rng.derive("measure-js");
    stats.pre_policy_distance = policy_distance(params, spec, obs, phi, js_rng);
  }

  AdamState adam = AdamState::init(params);
  Rng shuffle = aug_rng.derive("phase-shuffle");
  double loss_sum = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tensor aug = batch_apply_packed(phi, obs, aug_rng);
    const int chunks = std::max(1, (n + cfg.minibatch - 1) / cfg.minibatch);
    auto batches = split_minibatches(n, chunks, shuffle);
    for (const auto& idx : batches) {
      if (idx.empty()) continue;
      Tensor mb_obs = slice_rows(obs, idx);
      Tensor mb_aug = slice_rows(aug, idx);
      Tensor t_probs = cache.probs_at(idx, spec.num_actions);
      Tensor t_values = cache.values_at(idx);
      Tape tape;
      std::vector<Var> leaves = make_param_leaves(tape, params);
      TapedNet on_orig = forward_with_leaves(tape, leaves, params, spec, mb_obs);
      TapedNet on_aug = forward_with_leaves(tape, leaves, params, spec, mb_aug);
      Var loss =
          tape.add(build_l_dis_term(tape, on_orig, t_probs, t_values, cfg.include_value_term),
                   build_l_dis_term(tape, on_aug, t_probs, t_values, cfg.include_value_term));
      const double lv = tape.value(loss).data[0];
      if (!std::isfinite(lv)) throw std::runtime_error("da_phase: non-finite loss");
      tape.backward(loss);
      adam_step(params, extract_grads(tape, on_orig, params), adam, cfg.lr);
      loss_sum += lv;
      ++stats.updates;
    }
  }
  stats.mean_loss = stats.updates ? loss_sum / stats.updates : 0.0;
  stats.post_self_inconsistency = self_inconsistency(params, spec, obs, measure_aug, true);
  {
    Rng js_rng = aug_rng.derive("measure-js");
    stats.post_policy_distance = policy_distance(params, spec, obs, phi, js_rng);
  }
  // anchor: teacher vs student on original observations
  {
    ActorCriticOutput out = forward(params, spec, obs);
    Tensor lsq = kernels::log_softmax(out.logits);
    double kl = 0.0;
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < spec.num_actions; ++a) {
        const std::size_t off = static_cast<std::size_t>(i) * spec.num_actions + a;
        const double p = cache.probs.data[off];
        if (p > 0.0) kl += p * (std::log(p) - lsq.data[off]);
      }
    stats.anchor_kl = kl / n;
  }
  stats.teacher_fingerprint_after = cache.fingerprint();
  return stats;
}

struct DistillRunStats {
  long long fill_env_steps = 0;
  int updates = 0;
  double final_loss = 0.0;
};

// Fills a buffer with the pretrained policy's own trajectory.
inline Tensor fill_obs_buffer(const ParameterSet& params, const NetworkSpec& spec, VecEnv& envs,
                              int total_obs, Rng& act_rng) {
  envs.start();
  const EnvConfig& ec = envs.config();
  const int e_count = envs.size();
  Tensor out({total_obs, ec.image, ec.image, ec.channels});
  const std::size_t stride = static_cast<std::size_t>(ec.image) * ec.image * ec.channels;
  std::vector<int> acts(static_cast<std::size_t>(e_count));
  int filled = 0;
  while (filled < total_obs) {
    Tensor obs = envs.obs_batch();
    ActorCriticOutput fw = forward(params, spec, obs);
    Tensor probs = kernels::softmax(fw.logits);
    for (int e = 0; e < e_count && filled < total_obs; ++e) {
      std::copy_n(obs.data.begin() + static_cast<long>(stride) * e, stride,
                  out.data.begin() + static_cast<long>(stride) * filled);
      ++filled;
    }
    for (int e = 0; e < e_count; ++e)
      acts[static_cast<std::size_t>(e)] = sample_categorical(
          &probs.data[static_cast<std::size_t>(e) * spec.num_actions], spec.num_actions, act_rng);
    envs.step(acts);
  }
  return out;
}

namespace detail_distill {

// Shared post-training loop shape: cycle phi over the set, refresh the
// augmented buffer every `refresh` epochs, one full (or fixed-count) pass
// of minibatches per epoch.
template <typename LossFn>
DistillRunStats offline_distill_loop(ParameterSet& params, const NetworkSpec& spec,
                                     const Tensor& obs, const std::vector<AugmentationSpec>& phis,
                                     int epochs, int minibatch, int minibatches_per_epoch,
                                     int refresh, double lr, Rng& aug_rng, LossFn&& loss_fn) {
  if (phis.empty()) throw std::invalid_argument("distill: empty augmentation set");
  const int n = obs.dim(0);
  AdamState adam = AdamState::init(params);
  Rng shuffle = aug_rng.derive("distill-shuffle");
  DistillRunStats stats;
  Tensor aug;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (epoch % refresh == 0) {
      const AugmentationSpec& phi = phis[static_cast<std::size_t>((epoch / refresh) %
                                                                  static_cast<int>(phis.size()))];
      aug = batch_apply_packed(phi, obs, aug_rng);
    }
    const int full = std::max(1, (n + minibatch - 1) / minibatch);
    const int chunks = minibatches_per_epoch > 0 ? minibatches_per_epoch : full;
    auto batches = split_minibatches(n, full, shuffle);
    for (int c = 0; c < chunks; ++c) {
      const auto& idx = batches[static_cast<std::size_t>(c % full)];
      if (idx.empty()) continue;
      const double lv = loss_fn(params, idx, aug, adam, lr);
      stats.final_loss = lv;
      ++stats.updates;
    }
  }
  return stats;
}

}  // namespace detail_distill

// The distillation stage of ExDA over a prebuilt observation buffer (value
// terms dropped by default): theta starts at theta_old, teacher targets
// cached from the pretrained snapshot.
inline DistillRunStats exda_distill(ParameterSet& params, const NetworkSpec& spec,
                                    const Tensor& obs,
                                    const std::vector<AugmentationSpec>& phis,
                                    const DAConfig& cfg, Rng& aug_rng) {
  cfg.validate();
  if (phis.empty()) throw std::invalid_argument("exda: empty augmentation set");
  DistillRunStats stats;
  if (cfg.exda_epochs == 0) return stats;

  const ParameterSet teacher = params;
  TeacherCache cache = TeacherCache::build(teacher, spec, obs);
  if (cfg.exda_reinit)
    params = init_params(spec, Rng::mix(params.init_seed, 0x7265u), params.init_scale);

  const bool value_term = cfg.exda_include_value_term;
  auto loss_fn = [&](ParameterSet& p, const std::vector<int>& idx, const Tensor& aug,
                     AdamState& adam, double lr) {
    Tensor mb_obs = slice_rows(obs, idx);
    Tensor mb_aug = slice_rows(aug, idx);
    Tensor t_probs = cache.probs_at(idx, spec.num_actions);
    Tensor t_values = cache.values_at(idx);
    Tape tape;
    std::vector<Var> leaves = make_param_leaves(tape, p);
    TapedNet on_orig = forward_with_leaves(tape, leaves, p, spec, mb_obs);
    TapedNet on_aug = forward_with_leaves(tape, leaves, p, spec, mb_aug);
    Var loss = tape.add(build_l_dis_term(tape, on_orig, t_probs, t_values, value_term),
                        build_l_dis_term(tape, on_aug, t_probs, t_values, value_term));
    const double lv = tape.value(loss).data[0];
    if (!std::isfinite(lv)) throw std::runtime_error("exda: non-finite loss");
    tape.backward(loss);
    adam_step(p, extract_grads(tape, on_orig, p), adam, lr);
    return lv;
  };
  DistillRunStats loop = detail_distill::offline_distill_loop(
      params, spec, obs, phis, cfg.exda_epochs, cfg.exda_minibatch,
      cfg.exda_minibatches_per_epoch, cfg.exda_refresh_epochs, cfg.exda_lr, aug_rng, loss_fn);
  stats.updates = loop.updates;
  stats.final_loss = loop.final_loss;
  return stats;
}

// Alg-2 pipeline tail: fill the buffer along the pretrained policy's own
// trajectory, then distill.
inline DistillRunStats exda(ParameterSet& params, const NetworkSpec& spec, VecEnv& fill_envs,
                            const std::vector<AugmentationSpec>& phis, const DAConfig& cfg,
                            Rng& act_rng, Rng& aug_rng) {
  cfg.validate();
  if (phis.empty()) throw std::invalid_argument("exda: empty augmentation set");
  if (cfg.exda_epochs == 0) return {};
  const long long steps_before = fill_envs.total_env_steps();
  Tensor obs = fill_obs_buffer(params, spec, fill_envs, cfg.exda_buffer, act_rng);
  DistillRunStats stats = exda_distill(params, spec, obs, phis, cfg, aug_rng);
  stats.fill_env_steps = fill_envs.total_env_steps() - steps_before;
  return stats;
}

// Ablation: minimize the anchorless self-inconsistency on the same buffer
// and budget; gradients flow through both branches.
inline DistillRunStats exdrac(ParameterSet& params, const NetworkSpec& spec, const Tensor& obs,
                              const std::vector<AugmentationSpec>& phis, const DAConfig& cfg,
                              Rng& aug_rng) {
  cfg.validate();
  auto loss_fn = [&](ParameterSet& p, const std::vector<int>& idx, const Tensor& aug,
                     AdamState& adam, double lr) {
    Tensor mb_obs = slice_rows(obs, idx);
    Tensor mb_aug = slice_rows(aug, idx);
    Tape tape;
    std::vector<Var> leaves = make_param_leaves(tape, p);
    TapedNet on_orig = forward_with_leaves(tape, leaves, p, spec, mb_obs);
    TapedNet on_aug = forward_with_leaves(tape, leaves, p, spec, mb_aug);
    Var kl = tape.kl_pair_mean(on_orig.logits, on_aug.logits);
    Var dv = tape.sub(on_orig.values, on_aug.values);
    Var loss = tape.add(kl, tape.mean(tape.square(dv)));
    const double lv = tape.value(loss).data[0];
    if (!std::isfinite(lv)) throw std::runtime_error("exdrac: non-finite loss");
    tape.backward(loss);
    adam_step(p, extract_grads(tape, on_orig, p), adam, lr);
    return lv;
  };
  return detail_distill::offline_distill_loop(params, spec, obs, phis, cfg.exda_epochs,
                                              cfg.exda_minibatch, cfg.exda_minibatches_per_epoch,
                                              cfg.exda_refresh_epochs, cfg.exda_lr, aug_rng,
                                              loss_fn);
}

}  // namespace augsched
