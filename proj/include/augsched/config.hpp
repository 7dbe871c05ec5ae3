#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "augsched/augment.hpp"
#include "augsched/scheduler.hpp"

// Flat-sectioned key=value experiment configuration. Unknown sections or
// keys are rejected with line context; omitted keys fall back to the
// documented defaults. parse -> serialize -> parse round-trips exactly.

namespace augsched {

struct ExperimentConfig {
  EnvConfig env;
  NetworkSpec net = NetworkSpec::standard(64, 64, 3, kNumActions);
  double init_scale = 0.05;
  PPOConfig ppo;
  DAConfig da;
  BanditConfig bandit;
  int total_epochs = 200;
  std::vector<Method> methods = {Method::ppo};
  double drac_alpha = 0.1;
  bool pagrad_per_layer = false;
  bool ucb_require_identity = true;
  AugmentationSpec aug_params;  // shared kind-specific parameters
  std::vector<AugKind> aug_kinds = {AugKind::random_color};
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "runs";
  int eval_episodes = 50;
  int eval_cadence = 10;

  std::vector<AugmentationSpec> augmentation_list() const {
    std::vector<AugmentationSpec> out;
    for (AugKind k : aug_kinds) {
      AugmentationSpec s = aug_params;
      s.kind = k;
      out.push_back(s);
    }
    return out;
  }

  TrainSetup to_setup(Method method) const {
    TrainSetup s;
    s.env = env;
    s.net = net;
    // the network's input plane always follows the environment's images
    s.net.in_h = env.image;
    s.net.in_w = env.image;
    s.net.in_c = env.channels;
    s.net.num_actions = kNumActions;
    s.init_scale = init_scale;
    s.ppo = ppo;
    s.da = da;
    s.bandit = bandit;
    s.total_epochs = total_epochs;
    s.method = method;
    s.drac_alpha = drac_alpha;
    s.pagrad_per_layer = pagrad_per_layer;
    s.ucb_require_identity = ucb_require_identity;
    s.augmentations = augmentation_list();
    s.eval_cadence = eval_cadence;
    s.eval_episodes = eval_episodes;
    return s;
  }

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("config: seed list is empty");
    if (methods.empty()) throw std::invalid_argument("config: method list is empty");
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir is empty");
    for (Method m : methods) to_setup(m).validate();
  }
};

namespace detail_config {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct ParseCtx {
  int line = 0;
  [[noreturn]] void fail(const std::string& msg) const {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + msg);
  }
  double num(const std::string& v) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) fail("trailing characters in number '" + v + "'");
      return d;
    } catch (const std::invalid_argument&) {
      fail("expected a number, got '" + v + "'");
    } catch (const std::out_of_range&) {
      fail("number out of range: '" + v + "'");
    }
  }
  int integer(const std::string& v) const {
    const double d = num(v);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) fail("expected an integer, got '" + v + "'");
    return i;
  }
  bool boolean(const std::string& v) const {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    fail("expected a boolean, got '" + v + "'");
  }
};

inline std::vector<LayerSpec> parse_layers(const std::string& v, const ParseCtx& ctx) {
  std::vector<LayerSpec> layers;
  for (const std::string& item : split(v, ',')) {
    if (item.empty()) ctx.fail("empty layer entry");
    auto parts = split(item, ':');
    const std::string& kind = parts[0];
    if (kind == "relu" && parts.size() == 1) {
      layers.push_back({LayerSpec::Kind::relu});
    } else if (kind == "flatten" && parts.size() == 1) {
      layers.push_back({LayerSpec::Kind::flatten});
    } else if (kind == "conv" && parts.size() == 4) {
      layers.push_back({LayerSpec::Kind::conv, ctx.integer(parts[1]), ctx.integer(parts[2]),
                        ctx.integer(parts[3]), 0});
    } else if (kind == "dense" && parts.size() == 2) {
      layers.push_back({LayerSpec::Kind::dense, 0, 0, 0, ctx.integer(parts[1])});
    } else {
      ctx.fail("bad layer entry '" + item + "' (want conv:C:K:S, relu, flatten or dense:D)");
    }
  }
  return layers;
}

inline std::string layers_to_string(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ", ";
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        out += "conv:" + std::to_string(l.out_channels) + ":" + std::to_string(l.kernel) + ":" +
               std::to_string(l.stride);
        break;
      case LayerSpec::Kind::relu:
        out += "relu";
        break;
      case LayerSpec::Kind::flatten:
        out += "flatten";
        break;
      case LayerSpec::Kind::dense:
        out += "dense:" + std::to_string(l.out_dim);
        break;
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail_config

inline ExperimentConfig parse_config_text(const std::string& text) {
  using namespace detail_config;
  ExperimentConfig cfg;
  bool saw_schedule = false, saw_experiment = false;
  std::string section;
  ParseCtx ctx;
  std::istringstream is(text);
  std::string raw;
  while (std::getline(is, raw)) {
    ++ctx.line;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section == "schedule") saw_schedule = true;
      if (section == "experiment") saw_experiment = true;
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (section.empty()) ctx.fail("key '" + key + "' outside any section");

    if (section == "env") {
      if (key == "grid") cfg.env.grid = ctx.integer(val);
      else if (key == "image") cfg.env.image = ctx.integer(val);
      else if (key == "train_levels") cfg.env.train_levels = ctx.integer(val);
      else if (key == "train_background") cfg.env.train_background = ctx.integer(val);
      else if (key == "heldout_bg_base") cfg.env.heldout_bg_base = ctx.integer(val);
      else if (key == "heldout_bg_count") cfg.env.heldout_bg_count = ctx.integer(val);
      else if (key == "reward_goal") cfg.env.reward_goal = ctx.num(val);
      else if (key == "step_penalty") cfg.env.step_penalty = ctx.num(val);
      else if (key == "max_steps") cfg.env.max_steps = ctx.integer(val);
      else if (key == "distractor_density") cfg.env.distractor_density = ctx.num(val);
      else if (key == "wall_density") cfg.env.wall_density = ctx.num(val);
      else if (key == "bg_type") cfg.env.bg_type = ctx.integer(val);
      else ctx.fail("unknown key '" + key + "' in [env]");
    } else if (section == "network") {
      if (key == "layers") cfg.net.layers = parse_layers(val, ctx);
      else if (key == "init_scale") cfg.init_scale = ctx.num(val);
      else ctx.fail("unknown key '" + key + "' in [network]");
    } else if (section == "ppo") {
      if (key == "gamma") cfg.ppo.gamma = ctx.num(val);
      else if (key == "lambda") cfg.ppo.lam = ctx.num(val);
      else if (key == "clip_eps") cfg.ppo.clip_eps = ctx.num(val);
      else if (key == "value_coef") cfg.ppo.value_coef = ctx.num(val);
      else if (key == "entropy_coef") cfg.ppo.entropy_coef = ctx.num(val);
      else if (key == "epochs") cfg.ppo.epochs = ctx.integer(val);
      else if (key == "minibatches") cfg.ppo.minibatches = ctx.integer(val);
      else if (key == "lr") cfg.ppo.lr = ctx.num(val);
      else if (key == "reward_norm") cfg.ppo.reward_norm = ctx.boolean(val);
      else if (key == "num_envs") cfg.ppo.num_envs = ctx.integer(val);
      else if (key == "rollout_steps") cfg.ppo.rollout_steps = ctx.integer(val);
      else ctx.fail("unknown key '" + key + "' in [ppo]");
    } else if (section == "da") {
      if (key == "lr") cfg.da.lr = ctx.num(val);
      else if (key == "epochs") cfg.da.epochs = ctx.integer(val);
      else if (key == "interval") cfg.da.interval = ctx.integer(val);
      else if (key == "window_start") cfg.da.window_start = ctx.integer(val);
      else if (key == "window_end") cfg.da.window_end = ctx.integer(val);
      else if (key == "minibatch") cfg.da.minibatch = ctx.integer(val);
      else if (key == "include_value_term") cfg.da.include_value_term = ctx.boolean(val);
      else if (key == "anchor_kl_threshold") cfg.da.anchor_kl_threshold = ctx.num(val);
      else if (key == "exda_buffer") cfg.da.exda_buffer = ctx.integer(val);
      else if (key == "exda_epochs") cfg.da.exda_epochs = ctx.integer(val);
      else if (key == "exda_minibatch") cfg.da.exda_minibatch = ctx.integer(val);
      else if (key == "exda_minibatches_per_epoch")
        cfg.da.exda_minibatches_per_epoch = ctx.integer(val);
      else if (key == "exda_lr") cfg.da.exda_lr = ctx.num(val);
      else if (key == "exda_include_value_term")
        cfg.da.exda_include_value_term = ctx.boolean(val);
      else if (key == "exda_reinit") cfg.da.exda_reinit = ctx.boolean(val);
      else if (key == "exda_refresh_epochs") cfg.da.exda_refresh_epochs = ctx.integer(val);
      else ctx.fail("unknown key '" + key + "' in [da]");
    } else if (section == "bandit") {
      if (key == "window") cfg.bandit.window = ctx.integer(val);
      else if (key == "min_exploration") cfg.bandit.min_exploration = ctx.integer(val);
      else if (key == "eps_gap") cfg.bandit.eps_gap = ctx.num(val);
      else ctx.fail("unknown key '" + key + "' in [bandit]");
    } else if (section == "schedule") {
      if (key == "total_epochs") cfg.total_epochs = ctx.integer(val);
      else if (key == "methods") {
        cfg.methods.clear();
        for (const std::string& m : split(val, ','))
          if (!m.empty()) cfg.methods.push_back(parse_method(m));
      } else if (key == "drac_alpha") cfg.drac_alpha = ctx.num(val);
      else if (key == "pagrad_per_layer") cfg.pagrad_per_layer = ctx.boolean(val);
      else if (key == "ucb_require_identity") cfg.ucb_require_identity = ctx.boolean(val);
      else ctx.fail("unknown key '" + key + "' in [schedule]");
    } else if (section == "augment") {
      if (key == "kinds") {
        cfg.aug_kinds.clear();
        for (const std::string& k : split(val, ','))
          if (!k.empty()) cfg.aug_kinds.push_back(parse_aug_kind(k));
      } else if (key == "crop_min") cfg.aug_params.crop_min = ctx.num(val);
      else if (key == "cutout_max") cfg.aug_params.cutout_max = ctx.num(val);
      else if (key == "jitter_brightness") cfg.aug_params.jitter_brightness = ctx.num(val);
      else if (key == "jitter_contrast") cfg.aug_params.jitter_contrast = ctx.num(val);
      else if (key == "jitter_saturation") cfg.aug_params.jitter_saturation = ctx.num(val);
      else if (key == "conv_kernel") cfg.aug_params.conv_kernel = ctx.integer(val);
      else ctx.fail("unknown key '" + key + "' in [augment]");
    } else if (section == "experiment") {
      if (key == "seeds") {
        cfg.seeds.clear();
        for (const std::string& s : split(val, ','))
          if (!s.empty()) cfg.seeds.push_back(static_cast<std::uint64_t>(ctx.integer(s)));
      } else if (key == "out_dir") cfg.out_dir = val;
      else if (key == "eval_episodes") cfg.eval_episodes = ctx.integer(val);
      else if (key == "eval_cadence") cfg.eval_cadence = ctx.integer(val);
      else ctx.fail("unknown key '" + key + "' in [experiment]");
    } else {
      ctx.fail("unknown section [" + section + "]");
    }
  }
  std::string missing;
  if (!saw_schedule) missing += " [schedule]";
  if (!saw_experiment) missing += " [experiment]";
  if (!missing.empty())
    throw std::invalid_argument("config: missing required blocks:" + missing);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  using namespace detail_config;
  std::ostringstream os;
  os << "[env]\n";
  os << "grid = " << cfg.env.grid << "\n";
  os << "image = " << cfg.env.image << "\n";
  os << "train_levels = " << cfg.env.train_levels << "\n";
  os << "train_background = " << cfg.env.train_background << "\n";
  os << "heldout_bg_base = " << cfg.env.heldout_bg_base << "\n";
  os << "heldout_bg_count = " << cfg.env.heldout_bg_count << "\n";
  os << "reward_goal = " << fmt(cfg.env.reward_goal) << "\n";
  os << "step_penalty = " << fmt(cfg.env.step_penalty) << "\n";
  os << "max_steps = " << cfg.env.max_steps << "\n";
  os << "distractor_density = " << fmt(cfg.env.distractor_density) << "\n";
  os << "wall_density = " << fmt(cfg.env.wall_density) << "\n";
  os << "bg_type = " << cfg.env.bg_type << "\n";
  os << "\n[network]\n";
  os << "layers = " << layers_to_string(cfg.net.layers) << "\n";
  os << "init_scale = " << fmt(cfg.init_scale) << "\n";
  os << "\n[ppo]\n";
  os << "gamma = " << fmt(cfg.ppo.gamma) << "\n";
  os << "lambda = " << fmt(cfg.ppo.lam) << "\n";
  os << "clip_eps = " << fmt(cfg.ppo.clip_eps) << "\n";
  os << "value_coef = " << fmt(cfg.ppo.value_coef) << "\n";
  os << "entropy_coef = " << fmt(cfg.ppo.entropy_coef) << "\n";
  os << "epochs = " << cfg.ppo.epochs << "\n";
  os << "minibatches = " << cfg.ppo.minibatches << "\n";
  os << "lr = " << fmt(cfg.ppo.lr) << "\n";
  os << "reward_norm = " << (cfg.ppo.reward_norm ? "true" : "false") << "\n";
  os << "num_envs = " << cfg.ppo.num_envs << "\n";
  os << "rollout_steps = " << cfg.ppo.rollout_steps << "\n";
  os << "\n[da]\n";
  os << "lr = " << fmt(cfg.da.lr) << "\n";
  os << "epochs = " << cfg.da.epochs << "\n";
  os << "interval = " << cfg.da.interval << "\n";
  os << "window_start = " << cfg.da.window_start << "\n";
  os << "window_end = " << cfg.da.window_end << "\n";
  os << "minibatch = " << cfg.da.minibatch << "\n";
  os << "include_value_term = " << (cfg.da.include_value_term ? "true" : "false") << "\n";
  os << "anchor_kl_threshold = " << fmt(cfg.da.anchor_kl_threshold) << "\n";
  os << "exda_buffer = " << cfg.da.exda_buffer << "\n";
  os << "exda_epochs = " << cfg.da.exda_epochs << "\n";
  os << "exda_minibatch = " << cfg.da.exda_minibatch << "\n";
  os << "exda_minibatches_per_epoch = " << cfg.da.exda_minibatches_per_epoch << "\n";
  os << "exda_lr = " << fmt(cfg.da.exda_lr) << "\n";
  os << "exda_include_value_term = " << (cfg.da.exda_include_value_term ? "true" : "false")
     << "\n";
  os << "exda_reinit = " << (cfg.da.exda_reinit ? "true" : "false") << "\n";
  os << "exda_refresh_epochs = " << cfg.da.exda_refresh_epochs << "\n";
  os << "\n[bandit]\n";
  os << "window = " << cfg.bandit.window << "\n";
  os << "min_exploration = " << cfg.bandit.min_exploration << "\n";
  os << "eps_gap = " << fmt(cfg.bandit.eps_gap) << "\n";
  os << "\n[schedule]\n";
  os << "total_epochs = " << cfg.total_epochs << "\n";
  os << "methods = ";
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    os << (i ? ", " : "") << method_name(cfg.methods[i]);
  os << "\n";
  os << "drac_alpha = " << fmt(cfg.drac_alpha) << "\n";
  os << "pagrad_per_layer = " << (cfg.pagrad_per_layer ? "true" : "false") << "\n";
  os << "ucb_require_identity = " << (cfg.ucb_require_identity ? "true" : "false") << "\n";
  os << "\n[augment]\n";
  os << "kinds = ";
  for (std::size_t i = 0; i < cfg.aug_kinds.size(); ++i)
    os << (i ? ", " : "") << aug_name(cfg.aug_kinds[i]);
  os << "\n";
  os << "crop_min = " << fmt(cfg.aug_params.crop_min) << "\n";
  os << "cutout_max = " << fmt(cfg.aug_params.cutout_max) << "\n";
  os << "jitter_brightness = " << fmt(cfg.aug_params.jitter_brightness) << "\n";
  os << "jitter_contrast = " << fmt(cfg.aug_params.jitter_contrast) << "\n";
  os << "jitter_saturation = " << fmt(cfg.aug_params.jitter_saturation) << "\n";
  os << "conv_kernel = " << cfg.aug_params.conv_kernel << "\n";
  os << "\n[experiment]\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? ", " : "") << cfg.seeds[i];
  os << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "eval_episodes = " << cfg.eval_episodes << "\n";
  os << "eval_cadence = " << cfg.eval_cadence << "\n";
  return os.str();
}

}  // namespace augsched
