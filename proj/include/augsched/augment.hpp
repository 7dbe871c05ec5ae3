#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "augsched/rng.hpp"
#include "augsched/tensor.hpp"

// Image transformations phi : [0,1]^(H,W,C) -> [0,1]^(H,W,C). Every kind
// preserves shape and value range and is fully determined by (spec, image,
// rng state).

namespace augsched {

enum class AugKind {
  identity,
  random_crop,
  grayscale,
  cutout_color,
  color_jitter,
  random_conv,
  random_color,
  black,
};

inline const char* aug_name(AugKind k) {
  switch (k) {
    case AugKind::identity: return "identity";
    case AugKind::random_crop: return "random_crop";
    case AugKind::grayscale: return "grayscale";
    case AugKind::cutout_color: return "cutout_color";
    case AugKind::color_jitter: return "color_jitter";
    case AugKind::random_conv: return "random_conv";
    case AugKind::random_color: return "random_color";
    case AugKind::black: return "black";
  }
  return "?";
}

inline AugKind parse_aug_kind(const std::string& s) {
  for (AugKind k :
       {AugKind::identity, AugKind::random_crop, AugKind::grayscale, AugKind::cutout_color,
        AugKind::color_jitter, AugKind::random_conv, AugKind::random_color, AugKind::black})
    if (s == aug_name(k)) return k;
  throw std::invalid_argument("unknown augmentation kind: " + s);
}

struct AugmentationSpec {
  AugKind kind = AugKind::identity;
  double crop_min = 0.6;     // minimum kept side fraction
  double cutout_max = 0.5;   // maximum cut side fraction
  double jitter_brightness = 0.3;
  double jitter_contrast = 0.3;
  double jitter_saturation = 0.3;
  int conv_kernel = 3;

  static AugmentationSpec of(AugKind k) {
    AugmentationSpec s;
    s.kind = k;
    return s;
  }

  void validate() const {
    if (crop_min <= 0.0 || crop_min > 1.0)
      throw std::invalid_argument("AugmentationSpec: crop_min outside (0,1]");
    if (cutout_max <= 0.0 || cutout_max > 1.0)
      throw std::invalid_argument("AugmentationSpec: cutout_max outside (0,1]");
    if (jitter_brightness < 0.0 || jitter_brightness >= 1.0 || jitter_contrast < 0.0 ||
        jitter_contrast >= 1.0 || jitter_saturation < 0.0 || jitter_saturation >= 1.0)
      throw std::invalid_argument("AugmentationSpec: jitter range outside [0,1)");
    if (conv_kernel < 1 || conv_kernel % 2 == 0)
      throw std::invalid_argument("AugmentationSpec: conv_kernel must be odd and >= 1");
  }
};

struct CropRect {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

// Kept rectangle: side fractions uniform in [min_frac, 1], position uniform.
inline CropRect sample_crop_rect(Rng& rng, int H, int W, double min_frac) {
  CropRect r;
  const double fh = rng.uniform(min_frac, 1.0);
  const double fw = rng.uniform(min_frac, 1.0);
  r.h = std::clamp(static_cast<int>(std::lround(fh * H)), 1, H);
  r.w = std::clamp(static_cast<int>(std::lround(fw * W)), 1, W);
  r.y0 = rng.uniform_int(H - r.h + 1);
  r.x0 = rng.uniform_int(W - r.w + 1);
  return r;
}

namespace detail {

inline void require_image(const Tensor& img) {
  if (img.rank() != 3 || img.dim(2) < 1)
    throw std::invalid_argument("augment: expected (H,W,C) image");
}

inline Tensor apply_crop(const Tensor& img, Rng& rng, double min_frac) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const CropRect r = sample_crop_rect(rng, H, W, min_frac);
  Tensor out(img.shape);
  for (int y = r.y0; y < r.y0 + r.h; ++y)
    for (int x = r.x0; x < r.x0 + r.w; ++x)
      for (int c = 0; c < C; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * W + x) * C + c;
        out.data[i] = img.data[i];
      }
  return out;
}

inline Tensor apply_grayscale(const Tensor& img) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  Tensor out(img.shape);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t off = (static_cast<std::size_t>(y) * W + x) * C;
      double m = 0.0;
      for (int c = 0; c < C; ++c) m += img.data[off + c];
      m /= static_cast<double>(C);
      for (int c = 0; c < C; ++c) out.data[off + c] = m;
    }
  return out;
}

inline Tensor apply_cutout_color(const Tensor& img, Rng& rng, double max_frac) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  Tensor out = img;
  const int h = std::clamp(static_cast<int>(std::lround(rng.uniform(0.0, max_frac) * H)), 1, H);
  const int w = std::clamp(static_cast<int>(std::lround(rng.uniform(0.0, max_frac) * W)), 1, W);
  const int y0 = rng.uniform_int(H - h + 1);
  const int x0 = rng.uniform_int(W - w + 1);
  std::vector<double> color(static_cast<std::size_t>(C));
  for (double& c : color) c = rng.uniform();
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x)
      for (int c = 0; c < C; ++c)
        out.data[(static_cast<std::size_t>(y) * W + x) * C + c] = color[static_cast<std::size_t>(c)];
  return out;
}

// brightness, then contrast around the image mean, then saturation toward
// per-pixel gray, clamped to [0,1]
inline Tensor apply_color_jitter(const Tensor& img, Rng& rng, const AugmentationSpec& spec) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const double b = rng.uniform(1.0 - spec.jitter_brightness, 1.0 + spec.jitter_brightness);
  const double c = rng.uniform(1.0 - spec.jitter_contrast, 1.0 + spec.jitter_contrast);
  const double s = rng.uniform(1.0 - spec.jitter_saturation, 1.0 + spec.jitter_saturation);
  Tensor out(img.shape);
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean = mean * b / static_cast<double>(img.numel());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const std::size_t off = (static_cast<std::size_t>(y) * W + x) * C;
      double gray = 0.0;
      for (int ch = 0; ch < C; ++ch) {
        const double v = (img.data[off + ch] * b - mean) * c + mean;
        out.data[off + ch] = v;
        gray += v;
      }
      gray /= static_cast<double>(C);
      for (int ch = 0; ch < C; ++ch)
        out.data[off + ch] = std::clamp(gray + (out.data[off + ch] - gray) * s, 0.0, 1.0);
    }
  return out;
}

// k x k channel-mixing kernel with uniform weights, same zero padding,
// then per-image min-max rescale back to [0,1]
inline Tensor apply_random_conv(const Tensor& img, Rng& rng, int k) {
  const int H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const int r = k / 2;
  std::vector<double> kernel(static_cast<std::size_t>(k) * k * C * C);
  for (double& v : kernel) v = rng.uniform(-1.0, 1.0);
  Tensor out(img.shape);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int co = 0; co < C; ++co) {
        double acc = 0.0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int sy = y + ky - r, sx = x + kx - r;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
            const std::size_t soff = (static_cast<std::size_t>(sy) * W + sx) * C;
            const std::size_t koff = ((static_cast<std::size_t>(ky) * k + kx) * C) * C +
                                     static_cast<std::size_t>(co) * C;
            for (int ci = 0; ci < C; ++ci) acc += img.data[soff + ci] * kernel[koff + ci];
          }
        out.data[(static_cast<std::size_t>(y) * W + x) * C + co] = acc;
      }
  double lo = out.data[0], hi = out.data[0];
  for (double v : out.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  if (range < 1e-12) {
    for (double& v : out.data) v = 0.0;
  } else {
    for (double& v : out.data) v = (v - lo) / range;
  }
  return out;
}

}  // namespace detail

inline Tensor apply(const AugmentationSpec& spec, const Tensor& img, Rng& rng) {
  spec.validate();
  detail::require_image(img);
  switch (spec.kind) {
    case AugKind::identity:
      return img;
    case AugKind::random_crop:
      return detail::apply_crop(img, rng, spec.crop_min);
    case AugKind::grayscale:
      return detail::apply_grayscale(img);
    case AugKind::cutout_color:
      return detail::apply_cutout_color(img, rng, spec.cutout_max);
    case AugKind::color_jitter:
      return detail::apply_color_jitter(img, rng, spec);
    case AugKind::random_conv:
      return detail::apply_random_conv(img, rng, spec.conv_kernel);
    case AugKind::random_color:
      // coin drawn first, then the chosen transform consumes the stream
      return rng.coin() ? detail::apply_color_jitter(img, rng, spec)
                        : detail::apply_random_conv(img, rng, spec.conv_kernel);
    case AugKind::black:
      return Tensor(img.shape);
  }
  throw std::logic_error("augment: unhandled kind");
}

// Independent child stream per image, split from one parent draw, so batch
// elements can be transformed in any order or in parallel.
inline std::vector<Tensor> batch_apply(const AugmentationSpec& spec,
                                       const std::vector<Tensor>& images, Rng& rng) {
  const std::uint64_t session = rng.next_u64();
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    Rng child(Rng::mix(session, static_cast<std::uint64_t>(i)));
    out.push_back(apply(spec, images[i], child));
  }
  return out;
}

// Same split, operating on (N,H,W,C) batches stored as one tensor.
inline Tensor batch_apply_packed(const AugmentationSpec& spec, const Tensor& batch, Rng& rng) {
  if (batch.rank() != 4) throw std::invalid_argument("batch_apply_packed: expected (N,H,W,C)");
  const int N = batch.dim(0);
  const std::size_t stride =
      static_cast<std::size_t>(batch.dim(1)) * batch.dim(2) * batch.dim(3);
  const std::uint64_t session = rng.next_u64();
  Tensor out(batch.shape);
  Tensor img({batch.dim(1), batch.dim(2), batch.dim(3)});
  for (int n = 0; n < N; ++n) {
    std::copy_n(batch.data.begin() + static_cast<long>(stride) * n, stride, img.data.begin());
    Rng child(Rng::mix(session, static_cast<std::uint64_t>(n)));
    Tensor t = apply(spec, img, child);
    std::copy_n(t.data.begin(), stride, out.data.begin() + static_cast<long>(stride) * n);
  }
  return out;
}

}  // namespace augsched
