// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/core/rng.hpp"
#include "gersp/data/dataset.hpp"

namespace gersp {

/// Strong-augmentation pipeline: random area-ratio crop + resize, color
/// jitter, grayscale, horizontal flip, Gaussian blur, in that order.
struct AugmentationPolicy {
  float crop_ratio_min = 0.2f;
  float crop_ratio_max = 1.0f;
  float aspect_min = 0.75f;        // crop aspect range; area ratio is the
  float aspect_max = 4.0f / 3.0f;  // contract, aspect is config-visible
  std::size_t out_size = 224;
  float p_color_jitter = 0.8f;
  float jitter_brightness = 0.4f;
  float jitter_contrast = 0.4f;
  float jitter_saturation = 0.4f;
  float jitter_hue = 0.16f;
  float p_grayscale = 0.2f;
  float p_hflip = 0.5f;
  float p_blur = 0.5f;
  float blur_sigma_min = 0.1f;
  float blur_sigma_max = 2.0f;

  void validate() const {
    if (!(crop_ratio_min > 0 && crop_ratio_min <= crop_ratio_max && crop_ratio_max <= 1))
      throw ConfigError("augment policy: need 0 < crop_ratio_min <= crop_ratio_max <= 1");
    if (!(aspect_min > 0 && aspect_min <= aspect_max))
      throw ConfigError("augment policy: bad aspect range");
    if (out_size == 0) throw ConfigError("augment policy: out_size must be > 0");
    for (float p : {p_color_jitter, p_grayscale, p_hflip, p_blur})
      if (p < 0 || p > 1) throw ConfigError("augment policy: probability outside [0,1]");
    for (float f : {jitter_brightness, jitter_contrast, jitter_saturation, jitter_hue})
      if (f < 0) throw ConfigError("augment policy: jitter factor must be >= 0");
    if (!(blur_sigma_min > 0 && blur_sigma_min <= blur_sigma_max))
      throw ConfigError("augment policy: bad blur sigma range");
  }

  /// All probabilities zero and the crop pinned to the full image: the
  /// pipeline reduces to a bilinear resize.
  static AugmentationPolicy identity(std::size_t out_size) {
    AugmentationPolicy p;
    p.crop_ratio_min = p.crop_ratio_max = 1.0f;
    p.out_size = out_size;
    p.p_color_jitter = p.p_grayscale = p.p_hflip = p.p_blur = 0.0f;
    return p;
  }
};

/// Sampled crop rectangle, exposed so tests can assert the area-ratio bound.
struct CropGeometry {
  std::size_t x = 0, y = 0, w = 0, h = 0;
  std::size_t src_w = 0, src_h = 0;
  double area_ratio() const {
    return static_cast<double>(w) * static_cast<double>(h) /
           (static_cast<double>(src_w) * static_cast<double>(src_h));
  }
};

namespace detail {

inline float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

inline void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0 ? d / mx : 0.0f;
  if (d <= 0) {
    h = 0;
    return;
  }
  if (mx == r)      h = (g - b) / d;
  else if (mx == g) h = 2.0f + (b - r) / d;
  else              h = 4.0f + (r - g) / d;
  h /= 6.0f;
  if (h < 0) h += 1.0f;
}

inline void hsv_to_rgb_f(float h, float s, float v, float& r, float& g, float& b) {
  h = h - std::floor(h);
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  float rr = 0, gg = 0, bb = 0;
  if (hp < 1)      { rr = c; gg = x; }
  else if (hp < 2) { rr = x; gg = c; }
  else if (hp < 3) { gg = c; bb = x; }
  else if (hp < 4) { gg = x; bb = c; }
  else if (hp < 5) { rr = x; bb = c; }
  else             { rr = c; bb = x; }
  const float m = v - c;
  r = rr + m;
  g = gg + m;
  b = bb + m;
}

// half-sample symmetric reflection (-1 -> 0, n -> n-1); this fold conserves
// kernel mass, so a normalized blur preserves the image sum
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  const std::ptrdiff_t period = 2 * n;
  i = ((i % period) + period) % period;
  return i < n ? i : period - 1 - i;
}

}  // namespace detail

/// Bilinear resize (half-pixel-center convention). Exact copy when the size
/// is unchanged.
inline Image resize_bilinear(const Image& src, std::size_t out_h, std::size_t out_w) {
  const std::size_t h = src.dim(0), w = src.dim(1);
  Image dst({out_h, out_w, 3});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const float wy = static_cast<float>(fy - static_cast<double>(y0));
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const float wx = static_cast<float>(fx - static_cast<double>(x0));
      for (std::size_t c = 0; c < 3; ++c) {
        const float v00 = src(y0, x0, c), v01 = src(y0, x1, c);
        const float v10 = src(y1, x0, c), v11 = src(y1, x1, c);
        const float top = (1.0f - wx) * v00 + wx * v01;
        const float bot = (1.0f - wx) * v10 + wx * v11;
        dst(oy, ox, c) = (1.0f - wy) * top + wy * bot;
      }
    }
  }
  return dst;
}

namespace detail {

inline CropGeometry sample_crop(std::size_t h, std::size_t w,
                                const AugmentationPolicy& policy, RngStream& rng) {
  CropGeometry geom;
  geom.src_w = w;
  geom.src_h = h;
  if (policy.crop_ratio_min == 1.0f && policy.crop_ratio_max == 1.0f) {
    geom.w = w;
    geom.h = h;
    return geom;
  }
  const double area = static_cast<double>(w) * static_cast<double>(h);
  const double ratio = rng.uniform(policy.crop_ratio_min, policy.crop_ratio_max);
  double aspect = std::exp(rng.uniform(std::log(policy.aspect_min),
                                       std::log(policy.aspect_max)));
  // Clamp the aspect into the range where the crop fits the source.
  const double target = ratio * area;
  const double a_lo = target / (static_cast<double>(h) * static_cast<double>(h));
  const double a_hi = (static_cast<double>(w) * static_cast<double>(w)) / target;
  aspect = std::min(std::max(aspect, a_lo), a_hi);

  auto clamp_dim = [](double v, std::size_t hi) {
    return std::min<std::size_t>(hi, std::max<std::size_t>(1, static_cast<std::size_t>(
        std::llround(v))));
  };
  std::size_t cw = clamp_dim(std::sqrt(target * aspect), w);
  std::size_t ch = clamp_dim(std::sqrt(target / aspect), h);

  // Integer rounding can push the area outside the contract; walk it back in.
  const double lo = static_cast<double>(policy.crop_ratio_min) * area;
  const double hi = static_cast<double>(policy.crop_ratio_max) * area;
  auto crop_area = [&] { return static_cast<double>(cw) * static_cast<double>(ch); };
  while (crop_area() > hi && (cw > 1 || ch > 1)) {
    if (cw >= ch && cw > 1) --cw;
    else if (ch > 1) --ch;
    else break;
  }
  while (crop_area() < lo && (cw < w || ch < h)) {
    if (cw <= ch && cw < w) ++cw;
    else if (ch < h) ++ch;
    else break;
  }
  geom.w = cw;
  geom.h = ch;
  geom.x = static_cast<std::size_t>(rng.uniform_index(w - cw + 1));
  geom.y = static_cast<std::size_t>(rng.uniform_index(h - ch + 1));
  return geom;
}

inline Image extract_crop(const Image& src, const CropGeometry& g) {
  Image out({g.h, g.w, 3});
  for (std::size_t y = 0; y < g.h; ++y)
    for (std::size_t x = 0; x < g.w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out(y, x, c) = src(g.y + y, g.x + x, c);
  return out;
}

inline void apply_brightness(Image& img, float factor) {
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = clamp01(img[i] * factor);
}

inline void apply_contrast(Image& img, float factor) {
  double mean = 0;
  const std::size_t n = img.dim(0) * img.dim(1);
  for (std::size_t p = 0; p < n; ++p)
    mean += luma(img[3 * p], img[3 * p + 1], img[3 * p + 2]);
  const float m = static_cast<float>(mean / static_cast<double>(n));
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = clamp01(factor * img[i] + (1.0f - factor) * m);
}

inline void apply_saturation(Image& img, float factor) {
  const std::size_t n = img.dim(0) * img.dim(1);
  for (std::size_t p = 0; p < n; ++p) {
    const float g = luma(img[3 * p], img[3 * p + 1], img[3 * p + 2]);
    for (std::size_t c = 0; c < 3; ++c)
      img[3 * p + c] = clamp01(factor * img[3 * p + c] + (1.0f - factor) * g);
  }
}

inline void apply_hue(Image& img, float offset) {
  const std::size_t n = img.dim(0) * img.dim(1);
  for (std::size_t p = 0; p < n; ++p) {
    float h, s, v;
    rgb_to_hsv(img[3 * p], img[3 * p + 1], img[3 * p + 2], h, s, v);
    float r, g, b;
    hsv_to_rgb_f(h + offset, s, v, r, g, b);
    img[3 * p] = clamp01(r);
    img[3 * p + 1] = clamp01(g);
    img[3 * p + 2] = clamp01(b);
  }
}

inline void apply_grayscale(Image& img) {
  const std::size_t n = img.dim(0) * img.dim(1);
  for (std::size_t p = 0; p < n; ++p) {
    const float g = luma(img[3 * p], img[3 * p + 1], img[3 * p + 2]);
    img[3 * p] = img[3 * p + 1] = img[3 * p + 2] = g;
  }
}

inline void apply_hflip(Image& img) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w / 2; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        std::swap(img(y, x, c), img(y, w - 1 - x, c));
}

inline void apply_gaussian_blur(Image& img, double sigma) {
  int k = static_cast<int>(std::ceil(4.0 * sigma));
  if (k % 2 == 0) ++k;
  if (k < 1) k = 1;
  const int r = k / 2;
  std::vector<float> kernel(static_cast<std::size_t>(k));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + r)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : kernel) v = static_cast<float>(v / sum);

  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(img.dim(0));
  const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(img.dim(1));
  Image tmp({img.dim(0), img.dim(1), 3});
  // horizontal pass
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float acc = 0;
        for (int i = -r; i <= r; ++i) {
          const std::ptrdiff_t xi = reflect_index(x + i, w);
          acc += kernel[static_cast<std::size_t>(i + r)] *
                 img(static_cast<std::size_t>(y), static_cast<std::size_t>(xi), c);
        }
        tmp(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = acc;
      }
  // vertical pass
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        float acc = 0;
        for (int i = -r; i <= r; ++i) {
          const std::ptrdiff_t yi = reflect_index(y + i, h);
          acc += kernel[static_cast<std::size_t>(i + r)] *
                 tmp(static_cast<std::size_t>(yi), static_cast<std::size_t>(x), c);
        }
        img(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = acc;
      }
}

}  // namespace detail

/// One strong-augmentation pass. `geom_out`, when given, receives the sampled
/// crop rectangle.
inline Image strong_augment(const Image& image, const AugmentationPolicy& policy,
                            RngStream& rng, CropGeometry* geom_out = nullptr) {
  policy.validate();
  if (image.rank() != 3 || image.dim(2) != 3)
    throw ConfigError("strong_augment expects an HxWx3 image");
  if (image.dim(0) < 2 || image.dim(1) < 2)
    throw ConfigError("strong_augment: image smaller than 2x2");
  if (!image.all_finite())
    throw NumericError("strong_augment: image contains non-finite pixels");

  const CropGeometry geom = detail::sample_crop(image.dim(0), image.dim(1), policy, rng);
  if (geom_out) *geom_out = geom;
  Image out = (geom.w == image.dim(1) && geom.h == image.dim(0))
                  ? image
                  : detail::extract_crop(image, geom);
  out = resize_bilinear(out, policy.out_size, policy.out_size);

  if (policy.p_color_jitter > 0 && rng.bernoulli(policy.p_color_jitter)) {
    const auto order = rng.permutation(4);
    for (std::size_t op : order) {
      switch (op) {
        case 0:
          detail::apply_brightness(out, static_cast<float>(rng.uniform(
              std::max(0.0f, 1.0f - policy.jitter_brightness), 1.0f + policy.jitter_brightness)));
          break;
        case 1:
          detail::apply_contrast(out, static_cast<float>(rng.uniform(
              std::max(0.0f, 1.0f - policy.jitter_contrast), 1.0f + policy.jitter_contrast)));
          break;
        case 2:
          detail::apply_saturation(out, static_cast<float>(rng.uniform(
              std::max(0.0f, 1.0f - policy.jitter_saturation), 1.0f + policy.jitter_saturation)));
          break;
        default:
          detail::apply_hue(out, static_cast<float>(rng.uniform(
              -policy.jitter_hue, policy.jitter_hue)));
          break;
      }
    }
  }
  if (policy.p_grayscale > 0 && rng.bernoulli(policy.p_grayscale))
    detail::apply_grayscale(out);
  if (policy.p_hflip > 0 && rng.bernoulli(policy.p_hflip))
    detail::apply_hflip(out);
  if (policy.p_blur > 0 && rng.bernoulli(policy.p_blur))
    detail::apply_gaussian_blur(out, rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max));

  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = detail::clamp01(out[i]);
  return out;
}

/// Two independent augmentation draws of the same source image, from disjoint
/// sub-streams.
inline std::pair<Image, Image> make_contrastive_pair(const Image& image,
                                                     const AugmentationPolicy& policy,
                                                     const RngStream& rng) {
  RngStream rq = rng.fork("view_q");
  RngStream rk = rng.fork("view_k");
  return {strong_augment(image, policy, rq), strong_augment(image, policy, rk)};
}

}  // namespace gersp
