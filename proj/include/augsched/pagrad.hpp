#pragma once

#include <stdexcept>

#include "augsched/network.hpp"

namespace augsched {

// g_main + (g_aux - min{0, <g_aux, g_main>} / ||g_main||^2 * g_main):
// deletes the component of the auxiliary gradient opposing the main one.
// Inner products run over the single globally flattened vector; the
// per-tensor variant is available for ablation only.
inline GradientSet pagrad_combine(const GradientSet& g_main, const GradientSet& g_aux,
                                  bool per_layer = false) {
  if (g_main.names != g_aux.names)
    throw std::invalid_argument("pagrad_combine: gradient sets do not match");
  for (std::size_t i = 0; i < g_main.tensors.size(); ++i)
    if (g_main.tensors[i].shape != g_aux.tensors[i].shape)
      throw std::invalid_argument("pagrad_combine: shape mismatch for " + g_main.names[i]);

  GradientSet out;
  out.names = g_main.names;
  out.tensors.reserve(g_main.tensors.size());

  if (!per_layer) {
    const double d = dot(g_aux, g_main);
    const double n2 = squared_norm(g_main);
    const double coef = (d < 0.0 && n2 > 0.0) ? d / n2 : 0.0;
    for (std::size_t i = 0; i < g_main.tensors.size(); ++i) {
      Tensor t(g_main.tensors[i].shape);
      const auto &m = g_main.tensors[i].data, &a = g_aux.tensors[i].data;
      for (std::size_t j = 0; j < t.data.size(); ++j)
        t.data[j] = m[j] + (a[j] - coef * m[j]);
      out.tensors.push_back(std::move(t));
    }
    return out;
  }

  for (std::size_t i = 0; i < g_main.tensors.size(); ++i) {
    const auto &m = g_main.tensors[i].data, &a = g_aux.tensors[i].data;
    double d = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
      d += a[j] * m[j];
      n2 += m[j] * m[j];
    }
    const double coef = (d < 0.0 && n2 > 0.0) ? d / n2 : 0.0;
    Tensor t(g_main.tensors[i].shape);
    for (std::size_t j = 0; j < t.data.size(); ++j) t.data[j] = m[j] + (a[j] - coef * m[j]);
    out.tensors.push_back(std::move(t));
  }
  return out;
}

}  // namespace augsched
