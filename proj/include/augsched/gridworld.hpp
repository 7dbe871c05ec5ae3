#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "augsched/rng.hpp"
#include "augsched/tensor.hpp"

// Procedurally generated pixel gridworld. Levels are pure functions of a
// level id, backgrounds pure functions of a background id, and rendering a
// pure function of (level, agent cell, background), so the train/test
// factorization (same levels / unseen backgrounds, unseen levels / same
// background) holds by construction.

namespace augsched {

using Rgb = std::array<double, 3>;

constexpr Rgb kAgentColor{1.0, 0.0, 0.0};
constexpr Rgb kGoalColor{1.0, 1.0, 0.0};
constexpr Rgb kWallColor{0.2, 0.2, 0.2};

// Every palette entry keeps Euclidean distance >= 0.3 from each reserved
// entity color, so color-family augmentations cannot erase entities.
inline const std::vector<Rgb>& background_palette() {
  static const std::vector<Rgb> p = {
      {0.00, 0.30, 0.80}, {0.10, 0.60, 0.90}, {0.00, 0.50, 0.20}, {0.50, 0.90, 0.50},
      {0.60, 0.20, 0.80}, {0.90, 0.50, 0.80}, {0.20, 0.80, 0.80}, {0.90, 0.90, 0.90},
      {0.70, 0.70, 0.70}, {0.00, 0.00, 0.45}, {0.45, 0.00, 0.45}, {0.80, 0.85, 0.95},
  };
  return p;
}

inline const std::vector<Rgb>& distractor_palette() {
  static const std::vector<Rgb> p = {
      {0.05, 0.45, 0.65}, {0.55, 0.10, 0.55}, {0.15, 0.70, 0.35}, {0.75, 0.75, 0.95},
      {0.30, 0.30, 0.90}, {0.85, 0.60, 0.90},
  };
  return p;
}

enum class EnvMode { easybg, test_bg, test_lv };

inline const char* mode_name(EnvMode m) {
  switch (m) {
    case EnvMode::easybg: return "easybg";
    case EnvMode::test_bg: return "test-bg";
    case EnvMode::test_lv: return "test-lv";
  }
  return "?";
}

inline EnvMode parse_mode(const std::string& s) {
  if (s == "easybg") return EnvMode::easybg;
  if (s == "test-bg" || s == "test_bg") return EnvMode::test_bg;
  if (s == "test-lv" || s == "test_lv") return EnvMode::test_lv;
  throw std::invalid_argument("unknown env mode: " + s);
}

struct EnvConfig {
  int grid = 8;
  int image = 64;  // H == W
  int channels = 3;
  int train_levels = 50;
  int train_background = 0;
  int heldout_bg_base = 100;
  int heldout_bg_count = 8;
  double reward_goal = 10.0;
  double step_penalty = 0.0;
  int max_steps = 256;
  double distractor_density = 0.1;
  double wall_density = 0.22;
  // -1: texture family hashed per id; 0..3 pins one family (solid, stripes,
  // checker, noise) so backgrounds vary only in palette, the variation the
  // color-consistency prior covers
  int bg_type = -1;

  void validate() const {
    if (grid < 3) throw std::invalid_argument("EnvConfig: grid must be >= 3");
    if (image % grid != 0) throw std::invalid_argument("EnvConfig: image not divisible by grid");
    if (channels != 3) throw std::invalid_argument("EnvConfig: channels must be 3");
    if (train_levels < 1) throw std::invalid_argument("EnvConfig: train_levels must be >= 1");
    if (max_steps < 1) throw std::invalid_argument("EnvConfig: max_steps must be >= 1");
    if (distractor_density < 0.0 || distractor_density > 1.0)
      throw std::invalid_argument("EnvConfig: distractor_density outside [0,1]");
    if (heldout_bg_count < 1) throw std::invalid_argument("EnvConfig: empty held-out bg set");
    if (train_background >= heldout_bg_base &&
        train_background < heldout_bg_base + heldout_bg_count)
      throw std::invalid_argument("EnvConfig: train background inside held-out set");
    if (bg_type < -1 || bg_type > 3) throw std::invalid_argument("EnvConfig: bg_type out of range");
  }
};

// Deterministic texture generator for one background id.
struct BackgroundSpec {
  int id = 0;
  int type = 0;  // 0 solid, 1 h-stripes, 2 checker, 3 two-color noise
  Rgb c1{}, c2{};
  int period = 4;

  static BackgroundSpec make(int id, int forced_type = -1) {
    const auto& pal = background_palette();
    const int P = static_cast<int>(pal.size());
    BackgroundSpec b;
    b.id = id;
    if (forced_type >= 0) {
      // one texture family; palettes walk the color list injectively per
      // palette cycle so nearby ids stay pixel-distinct
      b.type = forced_type;
      const int i1 = id % P;
      b.c1 = pal[static_cast<std::size_t>(i1)];
      b.c2 = pal[static_cast<std::size_t>((i1 + 5) % P)];
      b.period = 2 + id % 4;
      return b;
    }
    Rng r = Rng(0x6267u).derive("background").derive(static_cast<std::uint64_t>(id));
    b.type = r.uniform_int(4);
    const int i1 = r.uniform_int(P);
    int i2 = r.uniform_int(P - 1);
    if (i2 >= i1) ++i2;  // distinct second color
    b.c1 = pal[static_cast<std::size_t>(i1)];
    b.c2 = pal[static_cast<std::size_t>(i2)];
    b.period = 2 + r.uniform_int(5);
    return b;
  }

  Rgb at(int y, int x) const {
    switch (type) {
      case 0: return c1;
      case 1: return (y / period) % 2 == 0 ? c1 : c2;
      case 2: return ((y / period) + (x / period)) % 2 == 0 ? c1 : c2;
      default: {
        const std::uint64_t h = Rng::mix(
            Rng::mix(static_cast<std::uint64_t>(id) + 0x9e37u, static_cast<std::uint64_t>(y)),
            static_cast<std::uint64_t>(x));
        return (h & 1u) ? c1 : c2;
      }
    }
  }
};

struct LevelSpec {
  int level_id = 0;
  int grid = 0;
  std::vector<std::uint8_t> walls;  // grid*grid, 1 = wall
  int start_cell = 0;
  int goal_cell = 0;
  std::vector<std::pair<int, Rgb>> distractors;

  bool is_wall(int cell) const { return walls[static_cast<std::size_t>(cell)] != 0; }

  static LevelSpec generate(const EnvConfig& cfg, int level_id);
};

// up, down, left, right
constexpr int kNumActions = 4;
inline int action_dy(int a) { return a == 0 ? -1 : a == 1 ? 1 : 0; }
inline int action_dx(int a) { return a == 2 ? -1 : a == 3 ? 1 : 0; }

namespace detail {

inline std::vector<int> bfs_distances(const std::vector<std::uint8_t>& walls, int grid,
                                      int from) {
  std::vector<int> dist(walls.size(), -1);
  std::deque<int> q;
  dist[static_cast<std::size_t>(from)] = 0;
  q.push_back(from);
  while (!q.empty()) {
    const int c = q.front();
    q.pop_front();
    const int cy = c / grid, cx = c % grid;
    for (int a = 0; a < kNumActions; ++a) {
      const int ny = cy + action_dy(a), nx = cx + action_dx(a);
      if (ny < 0 || ny >= grid || nx < 0 || nx >= grid) continue;
      const int n = ny * grid + nx;
      if (walls[static_cast<std::size_t>(n)] || dist[static_cast<std::size_t>(n)] >= 0) continue;
      dist[static_cast<std::size_t>(n)] = dist[static_cast<std::size_t>(c)] + 1;
      q.push_back(n);
    }
  }
  return dist;
}

}  // namespace detail

inline LevelSpec LevelSpec::generate(const EnvConfig& cfg, int level_id) {
  const int g = cfg.grid;
  Rng rng = Rng(0x6c76u).derive("level").derive(static_cast<std::uint64_t>(level_id));
  LevelSpec lv;
  lv.level_id = level_id;
  lv.grid = g;

  auto bordered = [g]() {
    std::vector<std::uint8_t> w(static_cast<std::size_t>(g) * g, 0);
    for (int i = 0; i < g; ++i) {
      w[static_cast<std::size_t>(i)] = 1;
      w[static_cast<std::size_t>((g - 1) * g + i)] = 1;
      w[static_cast<std::size_t>(i * g)] = 1;
      w[static_cast<std::size_t>(i * g + g - 1)] = 1;
    }
    return w;
  };

  bool ok = false;
  for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
    lv.walls = bordered();
    for (int y = 1; y < g - 1; ++y)
      for (int x = 1; x < g - 1; ++x)
        if (rng.uniform() < cfg.wall_density) lv.walls[static_cast<std::size_t>(y * g + x)] = 1;
    std::vector<int> free_cells;
    for (int c = 0; c < g * g; ++c)
      if (!lv.walls[static_cast<std::size_t>(c)]) free_cells.push_back(c);
    if (free_cells.size() < 2) continue;
    lv.start_cell = free_cells[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(free_cells.size())))];
    do {
      lv.goal_cell = free_cells[static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(free_cells.size())))];
    } while (lv.goal_cell == lv.start_cell);
    const auto dist = detail::bfs_distances(lv.walls, g, lv.start_cell);
    ok = dist[static_cast<std::size_t>(lv.goal_cell)] > 0;
  }
  if (!ok) {
    // open room fallback; always connected
    lv.walls = bordered();
    lv.start_cell = g + 1;
    lv.goal_cell = (g - 2) * g + (g - 2);
  }

  const auto& pal = distractor_palette();
  for (int c = 0; c < g * g; ++c) {
    if (lv.walls[static_cast<std::size_t>(c)] || c == lv.start_cell || c == lv.goal_cell) continue;
    if (rng.uniform() < cfg.distractor_density)
      lv.distractors.emplace_back(c, pal[static_cast<std::size_t>(
                                        rng.uniform_int(static_cast<int>(pal.size())))]);
  }
  return lv;
}

// Shortest action sequence start -> goal; empty only if unreachable,
// which generation rules out.
inline std::vector<int> bfs_shortest_path(const LevelSpec& lv) {
  const int g = lv.grid;
  const auto dist = detail::bfs_distances(lv.walls, g, lv.start_cell);
  if (dist[static_cast<std::size_t>(lv.goal_cell)] < 0) return {};
  std::vector<int> actions;
  int cur = lv.goal_cell;
  while (cur != lv.start_cell) {
    const int cy = cur / g, cx = cur % g;
    for (int a = 0; a < kNumActions; ++a) {
      const int py = cy - action_dy(a), px = cx - action_dx(a);
      if (py < 0 || py >= g || px < 0 || px >= g) continue;
      const int p = py * g + px;
      if (!lv.walls[static_cast<std::size_t>(p)] &&
          dist[static_cast<std::size_t>(p)] == dist[static_cast<std::size_t>(cur)] - 1) {
        actions.push_back(a);
        cur = p;
        break;
      }
    }
  }
  std::vector<int> fwd(actions.rbegin(), actions.rend());
  return fwd;
}

// Pure render of (level, agent cell) over a background texture.
inline Tensor render_frame(const EnvConfig& cfg, const LevelSpec& lv, int agent_cell, int bg_id) {
  const int g = cfg.grid, px = cfg.image / cfg.grid, H = cfg.image;
  const BackgroundSpec bg = BackgroundSpec::make(bg_id, cfg.bg_type);
  Tensor img({H, H, 3});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < H; ++x) {
      const Rgb c = bg.at(y, x);
      const std::size_t off = (static_cast<std::size_t>(y) * H + x) * 3;
      img.data[off] = c[0];
      img.data[off + 1] = c[1];
      img.data[off + 2] = c[2];
    }
  auto fill_cell = [&](int cell, const Rgb& c) {
    const int cy = (cell / g) * px, cx = (cell % g) * px;
    for (int y = cy; y < cy + px; ++y)
      for (int x = cx; x < cx + px; ++x) {
        const std::size_t off = (static_cast<std::size_t>(y) * H + x) * 3;
        img.data[off] = c[0];
        img.data[off + 1] = c[1];
        img.data[off + 2] = c[2];
      }
  };
  for (const auto& [cell, color] : lv.distractors) fill_cell(cell, color);
  for (int c = 0; c < g * g; ++c)
    if (lv.is_wall(c)) fill_cell(c, kWallColor);
  fill_cell(lv.goal_cell, kGoalColor);
  fill_cell(agent_cell, kAgentColor);
  return img;
}

struct StepResult {
  Tensor obs;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  Env(EnvConfig cfg, EnvMode mode, std::uint64_t instance_seed)
      : cfg_(cfg), mode_(mode), rng_(Rng(instance_seed).derive("env")) {
    cfg_.validate();
  }

  // Pinned single-level variant for debugging and oracle tests.
  static Env fixed_level(EnvConfig cfg, LevelSpec level, std::uint64_t instance_seed) {
    Env e(cfg, EnvMode::easybg, instance_seed);
    e.fixed_level_ = std::move(level);
    return e;
  }

  Tensor reset() {
    int level_id = 0;
    bg_id_ = cfg_.train_background;
    switch (mode_) {
      case EnvMode::easybg:
        level_id = rng_.uniform_int(cfg_.train_levels);
        break;
      case EnvMode::test_bg:
        level_id = rng_.uniform_int(cfg_.train_levels);
        bg_id_ = cfg_.heldout_bg_base + rng_.uniform_int(cfg_.heldout_bg_count);
        break;
      case EnvMode::test_lv:
        level_id = cfg_.train_levels + rng_.uniform_int(cfg_.train_levels);
        break;
    }
    level_ = fixed_level_ ? *fixed_level_ : LevelSpec::generate(cfg_, level_id);
    agent_cell_ = level_.start_cell;
    episode_steps_ = 0;
    started_ = true;
    return render_frame(cfg_, level_, agent_cell_, bg_id_);
  }

  StepResult step(int action) {
    if (!started_) throw std::logic_error("Env::step before reset");
    if (action < 0 || action >= kNumActions)
      throw std::invalid_argument("Env::step: invalid action index");
    const int g = cfg_.grid;
    const int ny = agent_cell_ / g + action_dy(action);
    const int nx = agent_cell_ % g + action_dx(action);
    const int target = ny * g + nx;
    if (!level_.is_wall(target)) agent_cell_ = target;
    ++episode_steps_;
    ++total_steps_;
    StepResult out;
    if (agent_cell_ == level_.goal_cell) {
      out.reward = cfg_.reward_goal;
      out.done = true;
    } else {
      out.reward = cfg_.step_penalty;
      out.done = episode_steps_ >= cfg_.max_steps;
    }
    out.obs = render_frame(cfg_, level_, agent_cell_, bg_id_);
    return out;
  }

  const EnvConfig& config() const { return cfg_; }
  EnvMode mode() const { return mode_; }
  const LevelSpec& level() const { return level_; }
  int background_id() const { return bg_id_; }
  int agent_cell() const { return agent_cell_; }
  int episode_steps() const { return episode_steps_; }
  long long total_steps() const { return total_steps_; }

 private:
  EnvConfig cfg_;
  EnvMode mode_;
  Rng rng_;
  std::optional<LevelSpec> fixed_level_;
  LevelSpec level_;
  int bg_id_ = 0;
  int agent_cell_ = 0;
  int episode_steps_ = 0;
  long long total_steps_ = 0;
  bool started_ = false;
};

inline Env make_env(const EnvConfig& cfg, EnvMode mode, std::uint64_t instance_seed) {
  return Env(cfg, mode, instance_seed);
}

// P6 PPM, 8-bit, values scaled by 255.
inline void write_ppm(const Tensor& img, const std::string& path) {
  if (img.rank() != 3 || img.dim(2) != 3)
    throw std::invalid_argument("write_ppm: expected (H,W,3) tensor");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << img.dim(1) << " " << img.dim(0) << "\n255\n";
  for (double v : img.data) {
    const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    os.put(static_cast<char>(static_cast<int>(c * 255.0 + 0.5)));
  }
  if (!os) throw std::runtime_error("write_ppm: write failure on " + path);
}

}  // namespace augsched
