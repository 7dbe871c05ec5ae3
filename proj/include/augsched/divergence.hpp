#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace augsched {

namespace detail {
inline std::vector<double> logits_to_log_probs(std::span<const double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double lz = m + std::log(z);
  std::vector<double> lp(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) lp[i] = logits[i] - lz;
  return lp;
}
}  // namespace detail

// KL[softmax(p) || softmax(q)] over one categorical distribution pair.
inline double kl_categorical(std::span<const double> p_logits, std::span<const double> q_logits) {
  if (p_logits.size() != q_logits.size() || p_logits.empty())
    throw std::invalid_argument("kl_categorical: length mismatch");
  auto lp = detail::logits_to_log_probs(p_logits);
  auto lq = detail::logits_to_log_probs(q_logits);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return kl;
}

// Jensen-Shannon divergence in probability space; bounded by ln 2.
inline double js_distance(std::span<const double> p_logits, std::span<const double> q_logits) {
  if (p_logits.size() != q_logits.size() || p_logits.empty())
    throw std::invalid_argument("js_distance: length mismatch");
  auto lp = detail::logits_to_log_probs(p_logits);
  auto lq = detail::logits_to_log_probs(q_logits);
  double js = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double p = std::exp(lp[i]), q = std::exp(lq[i]);
    const double m = 0.5 * (p + q);
    if (p > 0.0) js += 0.5 * p * (lp[i] - std::log(m));
    if (q > 0.0) js += 0.5 * q * (lq[i] - std::log(m));
  }
  return js;
}

}  // namespace augsched
