#pragma once

#include <cmath>
#include <stdexcept>

#include "augsched/network.hpp"
#include "augsched/tensor.hpp"

namespace augsched {

struct AdamState {
  std::vector<Tensor> m;  // first moments, parallel to ParameterSet order
  std::vector<Tensor> v;  // second moments
  long long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const ParameterSet& params) {
    AdamState s;
    s.m.reserve(params.tensors.size());
    s.v.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) {
      s.m.emplace_back(t.shape);
      s.v.emplace_back(t.shape);
    }
    return s;
  }
};

// Standard bias-corrected Adam. Rejects NaN/Inf gradients before touching
// any state.
inline void adam_step(ParameterSet& params, const GradientSet& grads, AdamState& state,
                      double lr) {
  if (grads.names != params.names)
    throw std::invalid_argument("adam_step: gradient set does not match parameters");
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (grads.tensors[i].shape != params.tensors[i].shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + params.names[i]);
    if (!all_finite(grads.tensors[i]))
      throw std::runtime_error("adam_step: non-finite gradient for " + params.names[i]);
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads.tensors[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace augsched
