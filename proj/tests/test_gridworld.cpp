#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "augsched/gridworld.hpp"

using namespace augsched;

namespace {
EnvConfig small_cfg() {
  EnvConfig c;
  c.grid = 8;
  c.image = 16;
  c.train_levels = 20;
  c.max_steps = 64;
  return c;
}

double color_dist(const Rgb& a, const Rgb& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

bool pixel_equals(const Tensor& img, int y, int x, const Rgb& c) {
  const int W = img.dim(1);
  const std::size_t off = (static_cast<std::size_t>(y) * W + x) * 3;
  return img.data[off] == c[0] && img.data[off + 1] == c[1] && img.data[off + 2] == c[2];
}
}  // namespace

TEST_CASE("palettes stay clear of reserved entity colors") {
  for (const auto& pal : {background_palette(), distractor_palette()})
    for (const Rgb& c : pal) {
      REQUIRE(color_dist(c, kAgentColor) >= 0.25);
      REQUIRE(color_dist(c, kGoalColor) >= 0.25);
      REQUIRE(color_dist(c, kWallColor) >= 0.25);
    }
}

TEST_CASE("mode contracts: level and background id ranges") {
  EnvConfig cfg = small_cfg();
  Env easy = make_env(cfg, EnvMode::easybg, 1);
  Env tlv = make_env(cfg, EnvMode::test_lv, 2);
  Env tbg = make_env(cfg, EnvMode::test_bg, 3);
  std::set<int> easy_levels, tlv_levels, tbg_bgs;
  for (int i = 0; i < 1000; ++i) {
    easy.reset();
    tlv.reset();
    tbg.reset();
    easy_levels.insert(easy.level().level_id);
    tlv_levels.insert(tlv.level().level_id);
    tbg_bgs.insert(tbg.background_id());
    REQUIRE(easy.level().level_id >= 0);
    REQUIRE(easy.level().level_id < cfg.train_levels);
    REQUIRE(easy.background_id() == cfg.train_background);
    REQUIRE(tlv.level().level_id >= cfg.train_levels);
    REQUIRE(tlv.level().level_id < 2 * cfg.train_levels);
    REQUIRE(tlv.background_id() == cfg.train_background);
    REQUIRE(tbg.background_id() >= cfg.heldout_bg_base);
    REQUIRE(tbg.background_id() < cfg.heldout_bg_base + cfg.heldout_bg_count);
  }
  // disjointness over the sampled sets
  for (int lv : easy_levels) REQUIRE(tlv_levels.count(lv) == 0);
  for (int bg : tbg_bgs) REQUIRE(bg != cfg.train_background);
}

TEST_CASE("construction is deterministic given (config, mode, seed)") {
  EnvConfig cfg = small_cfg();
  Env a = make_env(cfg, EnvMode::easybg, 77);
  Env b = make_env(cfg, EnvMode::easybg, 77);
  for (int i = 0; i < 20; ++i) {
    Tensor oa = a.reset(), ob = b.reset();
    REQUIRE(a.level().level_id == b.level().level_id);
    REQUIRE(bitwise_equal(oa, ob));
  }
}

TEST_CASE("reset renders normalized pixels with the agent in reserved color") {
  EnvConfig cfg = small_cfg();
  Env env = make_env(cfg, EnvMode::easybg, 5);
  Tensor obs = env.reset();
  REQUIRE(obs.shape == std::vector<int>{16, 16, 3});
  for (double v : obs.data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  const int px = cfg.image / cfg.grid;
  const int ay = (env.agent_cell() / cfg.grid) * px, ax = (env.agent_cell() % cfg.grid) * px;
  for (int y = ay; y < ay + px; ++y)
    for (int x = ax; x < ax + px; ++x) REQUIRE(pixel_equals(obs, y, x, kAgentColor));
}

TEST_CASE("walls block movement; border is all wall") {
  EnvConfig cfg = small_cfg();
  Env env = make_env(cfg, EnvMode::easybg, 9);
  Tensor obs = env.reset();
  // border pixels carry the wall color
  for (int x = 0; x < cfg.image; ++x) {
    REQUIRE(pixel_equals(obs, 0, x, kWallColor));
    REQUIRE(pixel_equals(obs, cfg.image - 1, x, kWallColor));
  }

  // walk toward a wall neighbor and verify the agent stays put
  const LevelSpec& lv = env.level();
  const int g = cfg.grid;
  int action = -1;
  for (int a = 0; a < kNumActions; ++a) {
    const int ny = env.agent_cell() / g + action_dy(a);
    const int nx = env.agent_cell() % g + action_dx(a);
    if (lv.is_wall(ny * g + nx)) {
      action = a;
      break;
    }
  }
  // levels are bordered, so some blocked direction always exists within
  // a couple of steps; the start cell nearly always has one
  if (action >= 0) {
    const int before = env.agent_cell();
    StepResult r = env.step(action);
    REQUIRE(env.agent_cell() == before);
    REQUIRE(r.reward == cfg.step_penalty);
    REQUIRE_FALSE(r.done);
  }
}

TEST_CASE("replaying the BFS path reaches the goal with the configured reward") {
  EnvConfig cfg = small_cfg();
  const double gamma = 0.99;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Env env = make_env(cfg, EnvMode::easybg, seed);
    env.reset();
    auto path = bfs_shortest_path(env.level());
    REQUIRE_FALSE(path.empty());
    double discounted = 0.0, discount = 1.0;
    StepResult r;
    for (std::size_t i = 0; i < path.size(); ++i) {
      r = env.step(path[i]);
      discounted += discount * r.reward;
      discount *= gamma;
    }
    REQUIRE(r.done);
    REQUIRE(r.reward == cfg.reward_goal);
    const double expected =
        cfg.reward_goal * std::pow(gamma, static_cast<double>(path.size() - 1));
    REQUIRE(discounted == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("identical action sequences replay identically") {
  EnvConfig cfg = small_cfg();
  Env a = make_env(cfg, EnvMode::easybg, 31);
  Env b = make_env(cfg, EnvMode::easybg, 31);
  Tensor oa = a.reset(), ob = b.reset();
  REQUIRE(bitwise_equal(oa, ob));
  Rng actions(4);
  for (int i = 0; i < 50; ++i) {
    const int act = actions.uniform_int(kNumActions);
    StepResult ra = a.step(act), rb = b.step(act);
    REQUIRE(ra.reward == rb.reward);
    REQUIRE(ra.done == rb.done);
    REQUIRE(bitwise_equal(ra.obs, rb.obs));
    if (ra.done) {
      oa = a.reset();
      ob = b.reset();
      REQUIRE(bitwise_equal(oa, ob));
    }
  }
}

TEST_CASE("dynamics are invariant to the background id") {
  EnvConfig cfg_a = small_cfg();
  EnvConfig cfg_b = small_cfg();
  cfg_b.train_background = 55;
  Env a = make_env(cfg_a, EnvMode::easybg, 12);
  Env b = make_env(cfg_b, EnvMode::easybg, 12);
  a.reset();
  b.reset();
  REQUIRE(a.level().level_id == b.level().level_id);
  Rng actions(9);
  for (int i = 0; i < 120; ++i) {
    const int act = actions.uniform_int(kNumActions);
    StepResult ra = a.step(act), rb = b.step(act);
    REQUIRE(ra.reward == rb.reward);
    REQUIRE(ra.done == rb.done);
    if (ra.done) {
      a.reset();
      b.reset();
    }
  }
}

TEST_CASE("renders with two backgrounds differ only on background cells") {
  EnvConfig cfg = small_cfg();
  LevelSpec lv = LevelSpec::generate(cfg, 3);
  Tensor f1 = render_frame(cfg, lv, lv.start_cell, 0);
  Tensor f2 = render_frame(cfg, lv, lv.start_cell, 101);
  REQUIRE_FALSE(bitwise_equal(f1, f2));  // distinct ids are pixel-distinct
  const int g = cfg.grid, px = cfg.image / g;
  std::vector<bool> entity(static_cast<std::size_t>(g) * g, false);
  for (int c = 0; c < g * g; ++c)
    if (lv.is_wall(c)) entity[static_cast<std::size_t>(c)] = true;
  entity[static_cast<std::size_t>(lv.goal_cell)] = true;
  entity[static_cast<std::size_t>(lv.start_cell)] = true;
  for (const auto& [c, col] : lv.distractors) entity[static_cast<std::size_t>(c)] = true;
  for (int y = 0; y < cfg.image; ++y)
    for (int x = 0; x < cfg.image; ++x) {
      const int cell = (y / px) * g + (x / px);
      const std::size_t off = (static_cast<std::size_t>(y) * cfg.image + x) * 3;
      if (entity[static_cast<std::size_t>(cell)])
        for (int ch = 0; ch < 3; ++ch) REQUIRE(f1.data[off + ch] == f2.data[off + ch]);
    }

  // rendering is pure
  Tensor f1b = render_frame(cfg, lv, lv.start_cell, 0);
  REQUIRE(bitwise_equal(f1, f1b));
}

TEST_CASE("a pinned background family varies palette but not texture type") {
  EnvConfig cfg = small_cfg();
  cfg.bg_type = 0;  // solid family
  LevelSpec lv = LevelSpec::generate(cfg, 1);
  Tensor train_frame = render_frame(cfg, lv, lv.start_cell, cfg.train_background);
  for (int id = cfg.heldout_bg_base; id < cfg.heldout_bg_base + cfg.heldout_bg_count; ++id) {
    BackgroundSpec bg = BackgroundSpec::make(id, 0);
    REQUIRE(bg.type == 0);
    REQUIRE(bg.at(0, 0) == bg.at(7, 3));  // solid
    Tensor f = render_frame(cfg, lv, lv.start_cell, id);
    REQUIRE_FALSE(bitwise_equal(f, train_frame));
  }
  EnvConfig bad = cfg;
  bad.bg_type = 4;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("invalid configuration and usage are rejected") {
  EnvConfig bad = small_cfg();
  bad.image = 15;
  REQUIRE_THROWS_AS(make_env(bad, EnvMode::easybg, 0), std::invalid_argument);
  EnvConfig zero_levels = small_cfg();
  zero_levels.train_levels = 0;
  REQUIRE_THROWS_AS(make_env(zero_levels, EnvMode::test_lv, 0), std::invalid_argument);

  Env env = make_env(small_cfg(), EnvMode::easybg, 0);
  REQUIRE_THROWS_AS(env.step(0), std::logic_error);  // before reset
  env.reset();
  REQUIRE_THROWS_AS(env.step(4), std::invalid_argument);
  REQUIRE_THROWS_AS(env.step(-1), std::invalid_argument);
}

TEST_CASE("ppm dump writes the documented header and payload size") {
  EnvConfig cfg = small_cfg();
  Env env = make_env(cfg, EnvMode::easybg, 2);
  Tensor obs = env.reset();
  const auto path = (std::filesystem::temp_directory_path() / "augsched_frame.ppm").string();
  write_ppm(obs, path);
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int w, h, maxv;
  is >> magic >> w >> h >> maxv;
  REQUIRE(magic == "P6");
  REQUIRE(w == 16);
  REQUIRE(h == 16);
  REQUIRE(maxv == 255);
  is.get();  // single whitespace after header
  std::vector<char> payload(16 * 16 * 3);
  is.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  REQUIRE(is.gcount() == static_cast<std::streamsize>(payload.size()));
  is.get();
  REQUIRE(is.eof());
  std::remove(path.c_str());
}
