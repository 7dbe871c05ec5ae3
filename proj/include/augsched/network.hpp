#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "augsched/autodiff.hpp"
#include "augsched/kernels.hpp"
#include "augsched/rng.hpp"
#include "augsched/tensor.hpp"

namespace augsched {

struct LayerSpec {
  enum class Kind { conv, relu, flatten, dense };
  Kind kind = Kind::relu;
  int out_channels = 0;  // conv
  int kernel = 0;        // conv
  int stride = 0;        // conv
  int out_dim = 0;       // dense
};

// Actor-critic trunk description: a conv/relu/flatten/dense chain feeding
// a policy-logit head of width |A| and a scalar value head.
struct NetworkSpec {
  int in_h = 64, in_w = 64, in_c = 3;
  std::vector<LayerSpec> layers;
  int num_actions = 4;

  static NetworkSpec standard(int h, int w, int c, int actions) {
    NetworkSpec s;
    s.in_h = h;
    s.in_w = w;
    s.in_c = c;
    s.num_actions = actions;
    s.layers = {
        {LayerSpec::Kind::conv, 16, 4, 2, 0}, {LayerSpec::Kind::relu},
        {LayerSpec::Kind::conv, 32, 3, 2, 0}, {LayerSpec::Kind::relu},
        {LayerSpec::Kind::flatten},           {LayerSpec::Kind::dense, 0, 0, 0, 128},
        {LayerSpec::Kind::relu},
    };
    return s;
  }

  // Walks the chain and returns the flat trunk width; throws on any
  // inconsistent layer geometry.
  int validate() const {
    if (in_h < 1 || in_w < 1 || in_c < 1 || num_actions < 2)
      throw std::invalid_argument("NetworkSpec: bad input dims or action count");
    int h = in_h, w = in_w, c = in_c;
    bool flat = false;
    int d = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      switch (l.kind) {
        case LayerSpec::Kind::conv: {
          if (flat) throw std::invalid_argument("NetworkSpec: conv after flatten");
          if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1)
            throw std::invalid_argument("NetworkSpec: bad conv params");
          if (h < l.kernel || w < l.kernel)
            throw std::invalid_argument("NetworkSpec: conv kernel exceeds input");
          h = (h - l.kernel) / l.stride + 1;
          w = (w - l.kernel) / l.stride + 1;
          c = l.out_channels;
          break;
        }
        case LayerSpec::Kind::relu:
          break;
        case LayerSpec::Kind::flatten:
          if (flat) throw std::invalid_argument("NetworkSpec: duplicate flatten");
          flat = true;
          d = h * w * c;
          break;
        case LayerSpec::Kind::dense:
          if (!flat) throw std::invalid_argument("NetworkSpec: dense before flatten");
          if (l.out_dim < 1) throw std::invalid_argument("NetworkSpec: bad dense width");
          d = l.out_dim;
          break;
      }
    }
    if (!flat) throw std::invalid_argument("NetworkSpec: trunk must end flat (missing flatten)");
    return d;
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "in:" << in_h << "x" << in_w << "x" << in_c << ";A:" << num_actions << ";";
    for (const LayerSpec& l : layers) {
      switch (l.kind) {
        case LayerSpec::Kind::conv:
          os << "conv:" << l.out_channels << ":" << l.kernel << ":" << l.stride << ";";
          break;
        case LayerSpec::Kind::relu:
          os << "relu;";
          break;
        case LayerSpec::Kind::flatten:
          os << "flatten;";
          break;
        case LayerSpec::Kind::dense:
          os << "dense:" << l.out_dim << ";";
          break;
      }
    }
    return os.str();
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : canonical()) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

// Named tensors in a fixed insertion order (layer order, then heads).
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::unordered_map<std::string, int> index;
  std::uint64_t spec_hash = 0;
  std::uint64_t init_seed = 0;
  double init_scale = 0.0;

  void add(const std::string& name, Tensor t) {
    if (index.count(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    index.emplace(name, static_cast<int>(names.size()));
    names.push_back(name);
    tensors.push_back(std::move(t));
  }

  Tensor& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("ParameterSet: unknown name " + name);
    return tensors[static_cast<std::size_t>(it->second)];
  }
  const Tensor& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw std::invalid_argument("ParameterSet: unknown name " + name);
    return tensors[static_cast<std::size_t>(it->second)];
  }

  int size() const { return static_cast<int>(names.size()); }

  long long total_scalars() const {
    long long n = 0;
    for (const Tensor& t : tensors) n += t.numel();
    return n;
  }
};

inline bool bitwise_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.names != b.names) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (!bitwise_equal(a.tensors[i], b.tensors[i])) return false;
  return true;
}

// Gradients mirroring a ParameterSet's names and shapes.
struct GradientSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  static GradientSet zeros_like(const ParameterSet& p) {
    GradientSet g;
    g.names = p.names;
    g.tensors.reserve(p.tensors.size());
    for (const Tensor& t : p.tensors) g.tensors.emplace_back(t.shape);
    return g;
  }

  long long total_scalars() const {
    long long n = 0;
    for (const Tensor& t : tensors) n += t.numel();
    return n;
  }
};

inline double dot(const GradientSet& a, const GradientSet& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto &x = a.tensors[i].data, &y = b.tensors[i].data;
    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * y[j];
  }
  return s;
}

inline double squared_norm(const GradientSet& g) { return dot(g, g); }

// Weights i.i.d. uniform in [-scale, scale], biases zero. scale == 0 is the
// allowed degenerate case (all-zero weights).
inline ParameterSet init_params(const NetworkSpec& spec, std::uint64_t seed, double scale) {
  if (scale < 0.0) throw std::invalid_argument("init_params: negative scale");
  const int trunk = spec.validate();
  ParameterSet p;
  p.spec_hash = spec.hash();
  p.init_seed = seed;
  p.init_scale = scale;
  Rng rng = Rng(seed).derive("init");

  int h = spec.in_h, w = spec.in_w, c = spec.in_c;
  bool flat = false;
  int d = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string tag = "l" + std::to_string(i);
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        p.add(tag + ".conv.w",
              Tensor::uniform({l.kernel, l.kernel, c, l.out_channels}, -scale, scale, rng));
        p.add(tag + ".conv.b", Tensor({l.out_channels}));
        h = (h - l.kernel) / l.stride + 1;
        w = (w - l.kernel) / l.stride + 1;
        c = l.out_channels;
        break;
      case LayerSpec::Kind::relu:
        break;
      case LayerSpec::Kind::flatten:
        flat = true;
        d = h * w * c;
        break;
      case LayerSpec::Kind::dense:
        p.add(tag + ".dense.w", Tensor::uniform({d, l.out_dim}, -scale, scale, rng));
        p.add(tag + ".dense.b", Tensor({l.out_dim}));
        d = l.out_dim;
        break;
    }
  }
  (void)flat;
  p.add("policy.w", Tensor::uniform({trunk, spec.num_actions}, -scale, scale, rng));
  p.add("policy.b", Tensor({spec.num_actions}));
  p.add("value.w", Tensor::uniform({trunk, 1}, -scale, scale, rng));
  p.add("value.b", Tensor({1}));
  return p;
}

struct ActorCriticOutput {
  Tensor logits;  // (N, |A|)
  Tensor values;  // (N,)
};

inline void check_obs_batch(const NetworkSpec& spec, const Tensor& obs) {
  if (obs.rank() != 4 || obs.dim(1) != spec.in_h || obs.dim(2) != spec.in_w ||
      obs.dim(3) != spec.in_c)
    throw std::invalid_argument("forward: observation batch shape " + obs.shape_str() +
                                " does not match network input");
  for (double v : obs.data)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("forward: observation values outside [0,1]");
}

// Plain (non-recorded) forward pass; pure function of (params, obs).
inline ActorCriticOutput forward(const ParameterSet& params, const NetworkSpec& spec,
                                 const Tensor& obs) {
  check_obs_batch(spec, obs);
  const int n = obs.dim(0);
  Tensor x = obs;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string tag = "l" + std::to_string(i);
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        x = kernels::conv2d(x, params.at(tag + ".conv.w"), params.at(tag + ".conv.b"), l.stride);
        break;
      case LayerSpec::Kind::relu:
        x = kernels::relu(x);
        break;
      case LayerSpec::Kind::flatten:
        x = x.reshaped({n, static_cast<int>(x.numel() / n)});
        break;
      case LayerSpec::Kind::dense:
        x = kernels::dense(x, params.at(tag + ".dense.w"), params.at(tag + ".dense.b"));
        break;
    }
  }
  ActorCriticOutput out;
  out.logits = kernels::dense(x, params.at("policy.w"), params.at("policy.b"));
  Tensor v = kernels::dense(x, params.at("value.w"), params.at("value.b"));
  out.values = v.reshaped({n});
  check_finite(out.logits, "forward logits");
  check_finite(out.values, "forward values");
  return out;
}

// Recorded forward pass. Leaves are created for every parameter tensor (in
// set order) so gradient extraction can walk the same order.
struct TapedNet {
  std::vector<Var> param_leaves;  // parallel to params.names
  Var logits;
  Var values;  // (N,)
};

inline std::vector<Var> make_param_leaves(Tape& tape, const ParameterSet& params) {
  std::vector<Var> leaves;
  leaves.reserve(params.tensors.size());
  for (const Tensor& t : params.tensors) leaves.push_back(tape.leaf(t));
  return leaves;
}

// Forward pass over an existing leaf set, so several branches (original and
// augmented observations) can share parameters on one tape.
inline TapedNet forward_with_leaves(Tape& tape, std::vector<Var> leaves,
                                    const ParameterSet& params, const NetworkSpec& spec,
                                    const Tensor& obs) {
  check_obs_batch(spec, obs);
  const int n = obs.dim(0);
  TapedNet net;
  net.param_leaves = std::move(leaves);
  auto leaf_of = [&](const std::string& name) {
    return net.param_leaves[static_cast<std::size_t>(params.index.at(name))];
  };

  Var x = tape.leaf(obs);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string tag = "l" + std::to_string(i);
    switch (l.kind) {
      case LayerSpec::Kind::conv:
        x = tape.conv2d(x, leaf_of(tag + ".conv.w"), leaf_of(tag + ".conv.b"), l.stride);
        break;
      case LayerSpec::Kind::relu:
        x = tape.relu(x);
        break;
      case LayerSpec::Kind::flatten:
        x = tape.reshape(x, {n, static_cast<int>(tape.value(x).numel() / n)});
        break;
      case LayerSpec::Kind::dense:
        x = tape.dense(x, leaf_of(tag + ".dense.w"), leaf_of(tag + ".dense.b"));
        break;
    }
  }
  net.logits = tape.dense(x, leaf_of("policy.w"), leaf_of("policy.b"));
  net.values = tape.reshape(tape.dense(x, leaf_of("value.w"), leaf_of("value.b")), {n});
  return net;
}

inline TapedNet forward_tape(Tape& tape, const ParameterSet& params, const NetworkSpec& spec,
                             const Tensor& obs) {
  return forward_with_leaves(tape, make_param_leaves(tape, params), params, spec, obs);
}

inline GradientSet extract_grads(Tape& tape, const TapedNet& net, const ParameterSet& params) {
  GradientSet g;
  g.names = params.names;
  g.tensors.reserve(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i)
    g.tensors.push_back(tape.grad(net.param_leaves[i]));
  return g;
}

}  // namespace augsched
