#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "augsched/tensor.hpp"

// Dense compute kernels shared by the recorded (tape) and plain forward
// paths, so the two paths can never disagree on values. Layout is NHWC
// with the channel axis innermost; inner loops run over contiguous output
// channels so they vectorize without FP reassociation.

namespace augsched::kernels {

// x: (N,H,W,Ci), w: (KH,KW,Ci,Co), b: (Co) -> (N,OH,OW,Co), valid conv
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int KH = w.dim(0), KW = w.dim(1), Co = w.dim(3);
  if (w.dim(2) != Ci) throw std::invalid_argument("conv2d: channel mismatch");
  if (stride < 1 || H < KH || W < KW) throw std::invalid_argument("conv2d: bad geometry");
  const int OH = (H - KH) / stride + 1, OW = (W - KW) / stride + 1;
  Tensor y({N, OH, OW, Co});
  for (int n = 0; n < N; ++n)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        double* yp = &y.data[(((static_cast<std::size_t>(n) * OH + oh) * OW + ow) * Co)];
        for (int co = 0; co < Co; ++co) yp[co] = b.data[static_cast<std::size_t>(co)];
        for (int kh = 0; kh < KH; ++kh)
          for (int kw = 0; kw < KW; ++kw) {
            const double* xp = &x.data[(((static_cast<std::size_t>(n) * H + oh * stride + kh) * W +
                                         ow * stride + kw) * Ci)];
            const double* wp = &w.data[((static_cast<std::size_t>(kh) * KW + kw) * Ci) * Co];
            for (int ci = 0; ci < Ci; ++ci) {
              const double xv = xp[ci];
              const double* wrow = wp + static_cast<std::size_t>(ci) * Co;
              for (int co = 0; co < Co; ++co) yp[co] += xv * wrow[co];
            }
          }
      }
  return y;
}

struct Conv2dGrads {
  Tensor gx, gw, gb;
};

inline Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, int stride, const Tensor& gy) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const int KH = w.dim(0), KW = w.dim(1), Co = w.dim(3);
  const int OH = gy.dim(1), OW = gy.dim(2);
  Conv2dGrads g{Tensor(x.shape), Tensor(w.shape), Tensor({Co})};
  for (int n = 0; n < N; ++n)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        const double* gp = &gy.data[(((static_cast<std::size_t>(n) * OH + oh) * OW + ow) * Co)];
        for (int co = 0; co < Co; ++co) g.gb.data[static_cast<std::size_t>(co)] += gp[co];
        for (int kh = 0; kh < KH; ++kh)
          for (int kw = 0; kw < KW; ++kw) {
            const std::size_t xoff = ((static_cast<std::size_t>(n) * H + oh * stride + kh) * W +
                                      ow * stride + kw) * Ci;
            const std::size_t woff = ((static_cast<std::size_t>(kh) * KW + kw) * Ci) * Co;
            for (int ci = 0; ci < Ci; ++ci) {
              const double xv = x.data[xoff + static_cast<std::size_t>(ci)];
              const double* wrow = &w.data[woff + static_cast<std::size_t>(ci) * Co];
              double* gwrow = &g.gw.data[woff + static_cast<std::size_t>(ci) * Co];
              double acc = 0.0;
              for (int co = 0; co < Co; ++co) {
                acc += gp[co] * wrow[co];
                gwrow[co] += xv * gp[co];
              }
              g.gx.data[xoff + static_cast<std::size_t>(ci)] += acc;
            }
          }
      }
  return g;
}

// x: (N,D), w: (D,O), b: (O) -> (N,O)
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int N = x.dim(0), D = x.dim(1), O = w.dim(1);
  if (w.dim(0) != D) throw std::invalid_argument("dense: dim mismatch");
  Tensor y({N, O});
  for (int n = 0; n < N; ++n) {
    double* yp = &y.data[static_cast<std::size_t>(n) * O];
    for (int o = 0; o < O; ++o) yp[o] = b.data[static_cast<std::size_t>(o)];
    const double* xp = &x.data[static_cast<std::size_t>(n) * D];
    for (int d = 0; d < D; ++d) {
      const double xv = xp[d];
      const double* wrow = &w.data[static_cast<std::size_t>(d) * O];
      for (int o = 0; o < O; ++o) yp[o] += xv * wrow[o];
    }
  }
  return y;
}

struct DenseGrads {
  Tensor gx, gw, gb;
};

inline DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy) {
  const int N = x.dim(0), D = x.dim(1), O = w.dim(1);
  DenseGrads g{Tensor(x.shape), Tensor(w.shape), Tensor({O})};
  for (int n = 0; n < N; ++n) {
    const double* gp = &gy.data[static_cast<std::size_t>(n) * O];
    const double* xp = &x.data[static_cast<std::size_t>(n) * D];
    double* gxp = &g.gx.data[static_cast<std::size_t>(n) * D];
    for (int o = 0; o < O; ++o) g.gb.data[static_cast<std::size_t>(o)] += gp[o];
    for (int d = 0; d < D; ++d) {
      const double xv = xp[d];
      const double* wrow = &w.data[static_cast<std::size_t>(d) * O];
      double* gwrow = &g.gw.data[static_cast<std::size_t>(d) * O];
      double acc = 0.0;
      for (int o = 0; o < O; ++o) {
        acc += gp[o] * wrow[o];
        gwrow[o] += xv * gp[o];
      }
      gxp[d] = acc;
    }
  }
  return g;
}

inline Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

// Row-wise log-softmax with max subtraction; x: (N,K)
inline Tensor log_softmax(const Tensor& x) {
  const int N = x.dim(0), K = x.dim(1);
  Tensor y(x.shape);
  for (int n = 0; n < N; ++n) {
    const double* xp = &x.data[static_cast<std::size_t>(n) * K];
    double* yp = &y.data[static_cast<std::size_t>(n) * K];
    double m = xp[0];
    for (int k = 1; k < K; ++k) m = std::max(m, xp[k]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(xp[k] - m);
    const double lz = m + std::log(z);
    for (int k = 0; k < K; ++k) yp[k] = xp[k] - lz;
  }
  return y;
}

inline Tensor softmax(const Tensor& x) {
  Tensor y = log_softmax(x);
  for (double& v : y.data) v = std::exp(v);
  return y;
}

}  // namespace augsched::kernels
