#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "augsched/ppo.hpp"

using namespace augsched;

namespace {

NetworkSpec tiny_net(int image) {
  NetworkSpec s;
  s.in_h = image;
  s.in_w = image;
  s.in_c = 3;
  s.num_actions = kNumActions;
  s.layers = {
      {LayerSpec::Kind::conv, 4, 3, 2, 0}, {LayerSpec::Kind::relu},
      {LayerSpec::Kind::flatten},          {LayerSpec::Kind::dense, 0, 0, 0, 16},
      {LayerSpec::Kind::relu},
  };
  return s;
}

// O(T^2) double-sum definition, truncated at episode cuts.
std::vector<double> gae_direct(const std::vector<double>& rewards,
                               const std::vector<double>& values,
                               const std::vector<std::uint8_t>& dones, double bootstrap,
                               double gamma, double lam) {
  const int T = static_cast<int>(rewards.size());
  std::vector<double> adv(static_cast<std::size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    double acc = 0.0, coef = 1.0;
    for (int l = t; l < T; ++l) {
      const double next_v = (l == T - 1) ? bootstrap : values[static_cast<std::size_t>(l + 1)];
      const double nonterm = dones[static_cast<std::size_t>(l)] ? 0.0 : 1.0;
      const double delta =
          rewards[static_cast<std::size_t>(l)] + gamma * next_v * nonterm -
          values[static_cast<std::size_t>(l)];
      acc += coef * delta;
      if (dones[static_cast<std::size_t>(l)]) break;
      coef *= gamma * lam;
    }
    adv[static_cast<std::size_t>(t)] = acc;
  }
  return adv;
}

RolloutBuffer synthetic_buffer(const std::vector<double>& rewards,
                               const std::vector<double>& values,
                               const std::vector<std::uint8_t>& dones, double bootstrap) {
  RolloutBuffer buf;
  buf.num_envs = 1;
  buf.steps = static_cast<int>(rewards.size());
  buf.rewards = rewards;
  buf.raw_rewards = rewards;
  buf.values = values;
  buf.dones = dones;
  buf.bootstrap_values = {bootstrap};
  return buf;
}

}  // namespace

TEST_CASE("GAE with lambda = 0 reduces to one-step TD residuals") {
  Rng rng(1);
  std::vector<double> r(20), v(20);
  std::vector<std::uint8_t> d(20, 0);
  for (int i = 0; i < 20; ++i) {
    r[static_cast<std::size_t>(i)] = rng.uniform(-1, 1);
    v[static_cast<std::size_t>(i)] = rng.uniform(-1, 1);
    if (rng.uniform() < 0.15) d[static_cast<std::size_t>(i)] = 1;
  }
  RolloutBuffer buf = synthetic_buffer(r, v, d, 0.3);
  compute_gae(buf, 0.99, 0.0);
  for (int t = 0; t < 20; ++t) {
    const double next_v = (t == 19) ? 0.3 : v[static_cast<std::size_t>(t + 1)];
    const double nonterm = d[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double delta =
        r[static_cast<std::size_t>(t)] + 0.99 * next_v * nonterm - v[static_cast<std::size_t>(t)];
    REQUIRE(buf.advantages[static_cast<std::size_t>(t)] == Catch::Approx(delta).margin(1e-14));
  }
}

TEST_CASE("GAE worked example: 3-step episode, r = (0,0,1), V = 0") {
  RolloutBuffer buf = synthetic_buffer({0.0, 0.0, 1.0}, {0.0, 0.0, 0.0}, {0, 0, 1}, 0.0);
  compute_gae(buf, 0.99, 0.95);
  const double gl = 0.99 * 0.95;
  REQUIRE(buf.advantages[0] == Catch::Approx(gl * gl).margin(1e-14));
  REQUIRE(buf.advantages[1] == Catch::Approx(gl).margin(1e-14));
  REQUIRE(buf.advantages[2] == Catch::Approx(1.0).margin(1e-14));
  // V^targ = A + V_old
  REQUIRE(buf.value_targets[2] == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("GAE recursion equals the direct double sum on random sequences") {
  Rng rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const int T = 50;
    std::vector<double> r(T), v(T);
    std::vector<std::uint8_t> d(T, 0);
    for (int i = 0; i < T; ++i) {
      r[static_cast<std::size_t>(i)] = rng.uniform(-2, 2);
      v[static_cast<std::size_t>(i)] = rng.uniform(-2, 2);
      if (rng.uniform() < 0.1) d[static_cast<std::size_t>(i)] = 1;
    }
    const double bootstrap = rng.uniform(-2, 2);
    const double gamma = rng.uniform(0.9, 0.999), lam = rng.uniform(0.8, 1.0);
    RolloutBuffer buf = synthetic_buffer(r, v, d, bootstrap);
    compute_gae(buf, gamma, lam);
    auto direct = gae_direct(r, v, d, bootstrap, gamma, lam);
    for (int t = 0; t < T; ++t)
      REQUIRE(std::abs(buf.advantages[static_cast<std::size_t>(t)] -
                       direct[static_cast<std::size_t>(t)]) <= 1e-10);
  }
}

TEST_CASE("rollout buffer holds E*T transitions with self-consistent logp") {
  EnvConfig ec;
  ec.grid = 5;
  ec.image = 10;
  ec.train_levels = 3;
  ec.max_steps = 16;
  NetworkSpec spec = tiny_net(ec.image);
  ParameterSet params = init_params(spec, 7, 0.05);
  VecEnv envs(ec, EnvMode::easybg, 3, 11);
  Rng act(12);
  RolloutBuffer buf = collect_rollout(params, spec, envs, 10, act, nullptr);
  REQUIRE(buf.size() == 30);
  REQUIRE(buf.obs.dim(0) == 30);
  REQUIRE(static_cast<int>(buf.actions.size()) == 30);

  // recompute log pi(a|o) from the stored observations
  for (int i = 0; i < buf.size(); ++i) {
    Tensor obs = buf.obs_at({i});
    ActorCriticOutput out = forward(params, spec, obs);
    Tensor logp = kernels::log_softmax(out.logits);
    REQUIRE(std::abs(buf.logp_old[static_cast<std::size_t>(i)] -
                     logp.data[static_cast<std::size_t>(buf.actions[static_cast<std::size_t>(i)])]) <=
            1e-12);
    REQUIRE(buf.logp_old[static_cast<std::size_t>(i)] <= 0.0);
    REQUIRE(std::abs(buf.values[static_cast<std::size_t>(i)] - out.values.data[0]) <= 1e-12);
  }
}

TEST_CASE("a near-deterministic policy replays the same trajectory") {
  EnvConfig ec;
  ec.grid = 5;
  ec.image = 10;
  ec.train_levels = 2;
  ec.max_steps = 12;
  NetworkSpec spec = tiny_net(ec.image);
  ParameterSet params = init_params(spec, 1, 0.0);
  params.at("policy.b").data[1] = 40.0;  // one logit dominates

  VecEnv a(ec, EnvMode::easybg, 5, 2), b(ec, EnvMode::easybg, 5, 2);
  Rng ra(3), rb(3);
  RolloutBuffer ba = collect_rollout(params, spec, a, 12, ra, nullptr);
  RolloutBuffer bb = collect_rollout(params, spec, b, 12, rb, nullptr);
  REQUIRE(ba.actions == bb.actions);
  REQUIRE(ba.raw_rewards == bb.raw_rewards);
  for (int i = 0; i < ba.size(); ++i)
    REQUIRE(ba.actions[static_cast<std::size_t>(i)] == 1);
}

TEST_CASE("ppo loss arithmetic at pinned ratios") {
  // one-sample minibatches evaluated with value and entropy terms disabled
  NetworkSpec spec = tiny_net(8);
  ParameterSet params = init_params(spec, 3, 0.05);
  Rng rng(4);
  Tensor obs = Tensor::uniform({1, 8, 8, 3}, 0.0, 1.0, rng);
  ActorCriticOutput out = forward(params, spec, obs);
  Tensor logp = kernels::log_softmax(out.logits);

  PPOConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  cfg.clip_eps = 0.2;

  auto policy_term = [&](double ratio, double adv) {
    Minibatch mb;
    mb.obs = obs;
    mb.actions = {2};
    mb.adv_norm = Tensor({1}, {adv});
    mb.vtarg = Tensor({1}, {0.0});
    mb.logp_old = Tensor({1}, {logp.data[2] - std::log(ratio)});
    Tape tape;
    TapedNet net = forward_tape(tape, params, spec, mb.obs);
    PpoLossParts parts;
    build_ppo_loss(tape, net, mb, cfg, &parts);
    return parts.policy;
  };

  REQUIRE(policy_term(1.0, 1.0) == Catch::Approx(1.0).margin(1e-9));     // unclipped center
  REQUIRE(policy_term(1.5, 1.0) == Catch::Approx(1.2).margin(1e-9));     // upper clip
  REQUIRE(policy_term(0.5, -1.0) == Catch::Approx(-0.8).margin(1e-9));   // pessimistic min
}

TEST_CASE("raising the advantage of a sampled action raises its logit") {
  NetworkSpec spec = tiny_net(8);
  ParameterSet params = init_params(spec, 5, 0.05);
  Rng rng(6);
  Tensor obs = Tensor::uniform({1, 8, 8, 3}, 0.0, 1.0, rng);
  ActorCriticOutput before = forward(params, spec, obs);
  Tensor logp = kernels::log_softmax(before.logits);

  Minibatch mb;
  mb.obs = obs;
  mb.actions = {0};
  mb.adv_norm = Tensor({1}, {1.0});
  mb.vtarg = Tensor({1}, {before.values.data[0]});
  mb.logp_old = Tensor({1}, {logp.data[0]});

  PPOConfig cfg;
  cfg.entropy_coef = 0.0;
  AdamState adam = AdamState::init(params);
  Tape tape;
  TapedNet net = forward_tape(tape, params, spec, mb.obs);
  Var loss = build_ppo_loss(tape, net, mb, cfg);
  tape.backward(loss);
  adam_step(params, extract_grads(tape, net, params), adam, 1e-5);

  ActorCriticOutput after = forward(params, spec, obs);
  REQUIRE(after.logits.data[0] >= before.logits.data[0]);
}

TEST_CASE("zero epochs leave parameters untouched; update count is epochs*minibatches") {
  EnvConfig ec;
  ec.grid = 5;
  ec.image = 10;
  ec.train_levels = 2;
  ec.max_steps = 16;
  NetworkSpec spec = tiny_net(ec.image);
  ParameterSet params = init_params(spec, 8, 0.05);
  VecEnv envs(ec, EnvMode::easybg, 2, 4);
  Rng act(5), shuffle(6);
  RolloutBuffer buf = collect_rollout(params, spec, envs, 16, act, nullptr);
  compute_gae(buf, 0.99, 0.95);

  PPOConfig cfg;
  cfg.epochs = 0;
  AdamState adam = AdamState::init(params);
  ParameterSet before = params;
  ppo_update(params, adam, spec, buf, cfg, shuffle);
  REQUIRE(bitwise_equal(params, before));
  REQUIRE(adam.step == 0);

  cfg.epochs = 3;
  cfg.minibatches = 4;
  ppo_update(params, adam, spec, buf, cfg, shuffle);
  REQUIRE(adam.step == 12);
}

TEST_CASE("reward normalization is invariant to a global reward scale") {
  const double scale = 37.5;
  RewardNormalizer a(2, 0.99), b(2, 0.99);
  Rng rng(7);
  double max_rel = 0.0;
  for (int i = 0; i < 3000; ++i) {
    const int e = i % 2;
    const double r = rng.uniform(-1.0, 2.0);
    const bool done = rng.uniform() < 0.02;
    const double na = a.process(e, r, done);
    const double nb = b.process(e, r * scale, done);
    if (i >= 1000) {
      const double rel = std::abs(na - nb) / std::max(1e-12, std::abs(na));
      max_rel = std::max(max_rel, rel);
    }
  }
  REQUIRE(max_rel < 1e-6);
}

TEST_CASE("reward normalizer state serializes") {
  RewardNormalizer a(3, 0.999);
  Rng rng(8);
  for (int i = 0; i < 500; ++i) a.process(i % 3, rng.uniform(-1, 1), rng.uniform() < 0.05);
  RewardNormalizer b = RewardNormalizer::deserialize(a.serialize());
  Rng r2(9);
  for (int i = 0; i < 100; ++i) {
    const double r = r2.uniform(-1, 1);
    REQUIRE(a.process(i % 3, r, false) == b.process(i % 3, r, false));
  }
}

TEST_CASE("ppo masters a goal-adjacent single level") {
  EnvConfig ec;
  ec.grid = 5;
  ec.image = 10;
  ec.train_levels = 1;
  ec.max_steps = 4;

  LevelSpec lv;
  lv.level_id = 0;
  lv.grid = 5;
  lv.walls.assign(25, 0);
  for (int i = 0; i < 5; ++i) {
    lv.walls[static_cast<std::size_t>(i)] = 1;
    lv.walls[static_cast<std::size_t>(20 + i)] = 1;
    lv.walls[static_cast<std::size_t>(i * 5)] = 1;
    lv.walls[static_cast<std::size_t>(i * 5 + 4)] = 1;
  }
  lv.start_cell = 6;
  lv.goal_cell = 7;  // one step right
  REQUIRE(bfs_shortest_path(lv).size() == 1);

  NetworkSpec spec = tiny_net(ec.image);
  ParameterSet params = init_params(spec, 10, 0.05);
  AdamState adam = AdamState::init(params);
  std::vector<Env> fixed;
  for (int i = 0; i < 4; ++i)
    fixed.push_back(Env::fixed_level(ec, lv, static_cast<std::uint64_t>(i)));
  VecEnv envs(std::move(fixed));

  PPOConfig cfg;
  cfg.gamma = 0.99;
  cfg.num_envs = 4;
  cfg.rollout_steps = 32;
  cfg.minibatches = 4;
  cfg.lr = 1e-3;
  Rng act(20), shuffle(21);
  RewardNormalizer norm(4, cfg.gamma);

  double recent_mean = 0.0;
  for (int update = 0; update < 200; ++update) {
    RolloutBuffer buf = collect_rollout(params, spec, envs, cfg.rollout_steps, act, &norm);
    compute_gae(buf, cfg.gamma, cfg.lam);
    ppo_update(params, adam, spec, buf, cfg, shuffle);
    if (update >= 195 && !buf.episode_returns.empty()) {
      double m = 0.0;
      for (double r : buf.episode_returns) m += r;
      recent_mean = m / static_cast<double>(buf.episode_returns.size());
    }
  }
  // BFS oracle: optimal return on this level is reward_goal
  REQUIRE(recent_mean > 0.9 * ec.reward_goal);
}
