#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "augsched/kernels.hpp"
#include "augsched/tensor.hpp"

// Reverse-mode tape over the fixed op set used by the losses. Each
// recorded node owns its value; gradients are accumulated lazily in
// reverse insertion order, which is already a topological order because
// ops may only consume earlier nodes.

namespace augsched {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched
    std::function<void(Tape&, int)> back;  // may be empty (leaf)
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  Var leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, nullptr});
    return Var{this, size() - 1};
  }

  const Tensor& value(Var v) const { return at(v).value; }

  // Zero tensor when the node never received gradient (no dependence).
  Tensor grad(Var v) const {
    const Node& n = at(v);
    if (n.grad.data.empty()) return Tensor(n.value.shape);
    return n.grad;
  }

  Tensor& grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  void backward(Var loss) {
    const Node& ln = at(loss);
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    grad_ref(loss.id).data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.grad.data.empty() && n.back) n.back(*this, i);
    }
  }

  // ---- ops ----

  Var conv2d(Var x, Var w, Var b, int stride) {
    Tensor y = kernels::conv2d(value(x), value(w), value(b), stride);
    return record(std::move(y), [xi = x.id, wi = w.id, bi = b.id, stride](Tape& t, int self) {
      auto g = kernels::conv2d_backward(t.node_value(xi), t.node_value(wi), stride,
                                        t.grad_ref(self));
      t.accumulate(xi, g.gx);
      t.accumulate(wi, g.gw);
      t.accumulate(bi, g.gb);
    });
  }

  Var dense(Var x, Var w, Var b) {
    Tensor y = kernels::dense(value(x), value(w), value(b));
    return record(std::move(y), [xi = x.id, wi = w.id, bi = b.id](Tape& t, int self) {
      auto g = kernels::dense_backward(t.node_value(xi), t.node_value(wi), t.grad_ref(self));
      t.accumulate(xi, g.gx);
      t.accumulate(wi, g.gw);
      t.accumulate(bi, g.gb);
    });
  }

  Var relu(Var x) {
    Tensor y = kernels::relu(value(x));
    return record(std::move(y), [xi = x.id](Tape& t, int self) {
      const Tensor& xv = t.node_value(xi);
      const Tensor& go = t.grad_ref(self);
      Tensor& gx = t.grad_ref(xi);
      for (std::size_t i = 0; i < gx.data.size(); ++i)
        if (xv.data[i] > 0.0) gx.data[i] += go.data[i];
    });
  }

  Var reshape(Var x, std::vector<int> shape) {
    Tensor y = value(x).reshaped(shape);
    return record(std::move(y), [xi = x.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      Tensor& gx = t.grad_ref(xi);
      for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += go.data[i];
    });
  }

  Var add(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    require_same_shape(av, bv, "add");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
    return record(std::move(y), [ai = a.id, bi = b.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      Tensor &ga = t.grad_ref(ai), &gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i];
        gb.data[i] += go.data[i];
      }
    });
  }

  Var sub(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    require_same_shape(av, bv, "sub");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] - bv.data[i];
    return record(std::move(y), [ai = a.id, bi = b.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      Tensor &ga = t.grad_ref(ai), &gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i];
        gb.data[i] -= go.data[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    require_same_shape(av, bv, "mul");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * bv.data[i];
    return record(std::move(y), [ai = a.id, bi = b.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      const Tensor &av2 = t.node_value(ai), &bv2 = t.node_value(bi);
      Tensor &ga = t.grad_ref(ai), &gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        ga.data[i] += go.data[i] * bv2.data[i];
        gb.data[i] += go.data[i] * av2.data[i];
      }
    });
  }

  Var scale(Var a, double c) {
    Tensor y(value(a).shape);
    const Tensor& av = value(a);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * c;
    return record(std::move(y), [ai = a.id, c](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      Tensor& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * c;
    });
  }

  Var sub_const(Var a, Tensor c) {
    const Tensor& av = value(a);
    require_same_shape(av, c, "sub_const");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] - c.data[i];
    return record(std::move(y), [ai = a.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      Tensor& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
    });
  }

  Var mul_const(Var a, Tensor c) {
    const Tensor& av = value(a);
    require_same_shape(av, c, "mul_const");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * c.data[i];
    return record(std::move(y), [ai = a.id, cc = std::move(c)](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      Tensor& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * cc.data[i];
    });
  }

  Var exp(Var a) {
    Tensor y(value(a).shape);
    const Tensor& av = value(a);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = std::exp(av.data[i]);
    return record(std::move(y), [ai = a.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      const Tensor& yv = t.node_value(self);
      Tensor& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * yv.data[i];
    });
  }

  Var square(Var a) {
    const Tensor& av = value(a);
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * av.data[i];
    return record(std::move(y), [ai = a.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      const Tensor& av2 = t.node_value(ai);
      Tensor& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < go.data.size(); ++i)
        ga.data[i] += go.data[i] * 2.0 * av2.data[i];
    });
  }

  // Zero gradient outside the open interval (lo, hi).
  Var clip(Var a, double lo, double hi) {
    const Tensor& av = value(a);
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = std::clamp(av.data[i], lo, hi);
    return record(std::move(y), [ai = a.id, lo, hi](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      const Tensor& av2 = t.node_value(ai);
      Tensor& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < go.data.size(); ++i)
        if (av2.data[i] > lo && av2.data[i] < hi) ga.data[i] += go.data[i];
    });
  }

  // Ties route the gradient to the first argument.
  Var minimum(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    require_same_shape(av, bv, "minimum");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = std::min(av.data[i], bv.data[i]);
    return record(std::move(y), [ai = a.id, bi = b.id](Tape& t, int self) {
      const Tensor& go = t.grad_ref(self);
      const Tensor &av2 = t.node_value(ai), &bv2 = t.node_value(bi);
      Tensor &ga = t.grad_ref(ai), &gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        if (av2.data[i] <= bv2.data[i])
          ga.data[i] += go.data[i];
        else
          gb.data[i] += go.data[i];
      }
    });
  }

  Var mean(Var a) {
    const Tensor& av = value(a);
    const double inv = 1.0 / static_cast<double>(av.numel());
    double s = 0.0;
    for (double v : av.data) s += v;
    return record(Tensor::scalar(s * inv), [ai = a.id, inv](Tape& t, int self) {
      const double go = t.grad_ref(self).data[0];
      Tensor& ga = t.grad_ref(ai);
      for (double& g : ga.data) g += go * inv;
    });
  }

  Var sum(Var a) {
    const Tensor& av = value(a);
    double s = 0.0;
    for (double v : av.data) s += v;
    return record(Tensor::scalar(s), [ai = a.id](Tape& t, int self) {
      const double go = t.grad_ref(self).data[0];
      Tensor& ga = t.grad_ref(ai);
      for (double& g : ga.data) g += go;
    });
  }

  // logits: (N,K), actions: length N. Result (N,) of log softmax(logits)[a].
  Var gather_logp(Var logits, std::vector<int> actions) {
    const Tensor& lv = value(logits);
    const int N = lv.dim(0), K = lv.dim(1);
    if (static_cast<int>(actions.size()) != N)
      throw std::invalid_argument("gather_logp: action count mismatch");
    Tensor lsm = kernels::log_softmax(lv);
    Tensor y({N});
    for (int n = 0; n < N; ++n) {
      const int a = actions[static_cast<std::size_t>(n)];
      if (a < 0 || a >= K) throw std::invalid_argument("gather_logp: action out of range");
      y.data[static_cast<std::size_t>(n)] = lsm.data[static_cast<std::size_t>(n) * K + a];
    }
    return record(std::move(y),
                  [li = logits.id, acts = std::move(actions), lsm = std::move(lsm), K](
                      Tape& t, int self) {
                    const Tensor& go = t.grad_ref(self);
                    Tensor& gl = t.grad_ref(li);
                    const int N2 = static_cast<int>(acts.size());
                    for (int n = 0; n < N2; ++n) {
                      const double g = go.data[static_cast<std::size_t>(n)];
                      if (g == 0.0) continue;
                      const std::size_t off = static_cast<std::size_t>(n) * K;
                      for (int k = 0; k < K; ++k)
                        gl.data[off + k] -= g * std::exp(lsm.data[off + k]);
                      gl.data[off + acts[static_cast<std::size_t>(n)]] += g;
                    }
                  });
  }

  // Mean over rows of the policy entropy H(softmax(logits)).
  Var entropy_mean(Var logits) {
    const Tensor& lv = value(logits);
    const int N = lv.dim(0), K = lv.dim(1);
    Tensor lsm = kernels::log_softmax(lv);
    double total = 0.0;
    std::vector<double> row_h(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
      double h = 0.0;
      for (int k = 0; k < K; ++k) {
        const double lp = lsm.data[static_cast<std::size_t>(n) * K + k];
        h -= std::exp(lp) * lp;
      }
      row_h[static_cast<std::size_t>(n)] = h;
      total += h;
    }
    const double inv = 1.0 / static_cast<double>(N);
    return record(Tensor::scalar(total * inv),
                  [li = logits.id, lsm = std::move(lsm), row_h = std::move(row_h), K, inv](
                      Tape& t, int self) {
                    const double go = t.grad_ref(self).data[0];
                    if (go == 0.0) return;
                    Tensor& gl = t.grad_ref(li);
                    const int N2 = static_cast<int>(row_h.size());
                    for (int n = 0; n < N2; ++n) {
                      const std::size_t off = static_cast<std::size_t>(n) * K;
                      for (int k = 0; k < K; ++k) {
                        const double lp = lsm.data[off + k];
                        // dH/dlogit_k = -p_k (log p_k + H)
                        gl.data[off + k] +=
                            go * inv * (-std::exp(lp) * (lp + row_h[static_cast<std::size_t>(n)]));
                      }
                    }
                  });
  }

  // Mean over rows of KL(p || softmax(q)) with constant target probabilities p.
  Var kl_const_teacher_mean(Tensor p_probs, Var q_logits) {
    const Tensor& qv = value(q_logits);
    require_same_shape(p_probs, qv, "kl_const_teacher_mean");
    const int N = qv.dim(0), K = qv.dim(1);
    Tensor lsq = kernels::log_softmax(qv);
    double total = 0.0;
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) {
        const std::size_t i = static_cast<std::size_t>(n) * K + k;
        const double p = p_probs.data[i];
        if (p > 0.0) total += p * (std::log(p) - lsq.data[i]);
      }
    const double inv = 1.0 / static_cast<double>(N);
    return record(Tensor::scalar(total * inv),
                  [qi = q_logits.id, pp = std::move(p_probs), lsq = std::move(lsq), inv](
                      Tape& t, int self) {
                    const double go = t.grad_ref(self).data[0];
                    if (go == 0.0) return;
                    Tensor& gq = t.grad_ref(qi);
                    for (std::size_t i = 0; i < gq.data.size(); ++i)
                      gq.data[i] += go * inv * (std::exp(lsq.data[i]) - pp.data[i]);
                  });
  }

  // Mean over rows of KL(softmax(p) || softmax(q)); differentiable in both.
  Var kl_pair_mean(Var p_logits, Var q_logits) {
    const Tensor &pv = value(p_logits), &qv = value(q_logits);
    require_same_shape(pv, qv, "kl_pair_mean");
    const int N = pv.dim(0), K = pv.dim(1);
    Tensor lsp = kernels::log_softmax(pv);
    Tensor lsq = kernels::log_softmax(qv);
    std::vector<double> row_kl(static_cast<std::size_t>(N), 0.0);
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
      double kl = 0.0;
      for (int k = 0; k < K; ++k) {
        const std::size_t i = static_cast<std::size_t>(n) * K + k;
        kl += std::exp(lsp.data[i]) * (lsp.data[i] - lsq.data[i]);
      }
      row_kl[static_cast<std::size_t>(n)] = kl;
      total += kl;
    }
    const double inv = 1.0 / static_cast<double>(N);
    return record(
        Tensor::scalar(total * inv),
        [pi = p_logits.id, qi = q_logits.id, lsp = std::move(lsp), lsq = std::move(lsq),
         row_kl = std::move(row_kl), K, inv](Tape& t, int self) {
          const double go = t.grad_ref(self).data[0];
          if (go == 0.0) return;
          Tensor& gp = t.grad_ref(pi);
          Tensor& gq = t.grad_ref(qi);
          const int N2 = static_cast<int>(row_kl.size());
          for (int n = 0; n < N2; ++n) {
            const std::size_t off = static_cast<std::size_t>(n) * K;
            for (int k = 0; k < K; ++k) {
              const double p = std::exp(lsp.data[off + k]);
              // d/dp_logit: p_k ((lp_k - lq_k) - KL_row); d/dq_logit: q_k - p_k
              gp.data[off + k] +=
                  go * inv * p *
                  ((lsp.data[off + k] - lsq.data[off + k]) - row_kl[static_cast<std::size_t>(n)]);
              gq.data[off + k] += go * inv * (std::exp(lsq.data[off + k]) - p);
            }
          }
        });
  }

  // Mean of (x - target)^2 with constant target.
  Var mse_const_mean(Var x, Tensor target) {
    const Tensor& xv = value(x);
    require_same_shape(xv, target, "mse_const_mean");
    const double inv = 1.0 / static_cast<double>(xv.numel());
    double total = 0.0;
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      const double d = xv.data[i] - target.data[i];
      total += d * d;
    }
    return record(Tensor::scalar(total * inv),
                  [xi = x.id, tt = std::move(target), inv](Tape& t, int self) {
                    const double go = t.grad_ref(self).data[0];
                    if (go == 0.0) return;
                    const Tensor& xv2 = t.node_value(xi);
                    Tensor& gx = t.grad_ref(xi);
                    for (std::size_t i = 0; i < gx.data.size(); ++i)
                      gx.data[i] += go * inv * 2.0 * (xv2.data[i] - tt.data[i]);
                  });
  }

  const Tensor& node_value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  void accumulate(int id, const Tensor& g) {
    Tensor& dst = grad_ref(id);
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
  }

 private:
  const Node& at(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= size())
      throw std::invalid_argument("Var does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                  b.shape_str());
  }

  template <typename F>
  Var record(Tensor value, F&& back) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::forward<F>(back)});
    return Var{this, size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace augsched
