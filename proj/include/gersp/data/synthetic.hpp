// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gersp/core/rng.hpp"
#include "gersp/data/dataset.hpp"

namespace gersp {

/// Desk-scale stand-in for a labeled natural corpus plus an unlabeled
/// overhead-imagery corpus.
struct SyntheticCorpusSpec {
  std::size_t n_natural = 2000;
  std::size_t n_rs = 2000;
  int k_classes = 10;
  std::size_t image_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_natural == 0 || n_rs == 0 || image_size == 0)
      throw ConfigError("synthetic corpus spec: counts must be positive");
    if (k_classes < 2)
      throw ConfigError("synthetic corpus spec: k_classes must be >= 2");
  }
};

struct SyntheticCorpus {
  LabeledDataset natural;
  UnlabeledDataset rs;
  std::vector<int> rs_latent_types;  // scene type behind each rs image
};

namespace detail {

inline void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)      { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else             { r = c; b = x; }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

inline float quantize_255(double v) {
  v = std::min(1.0, std::max(0.0, v));
  return static_cast<float>(std::round(v * 255.0)) / 255.0f;
}

inline double fract(double x) { return x - std::floor(x); }

/// Class-conditioned texture: saturated per-class hue and brightness plus an
/// oriented grating, so per-class mean colors are well separated.
inline Image make_natural_image(std::size_t size, int cls, int k, RngStream& rng) {
  const double hue = fract(cls * 0.61803398874989485);
  const double value = 0.55 + 0.40 * fract(cls * 0.75487766624669276);
  const double sat = 0.65 + 0.25 * fract(cls * 0.34560000000000002);
  double base[3];
  hsv_to_rgb(hue, sat, value, base);

  const double freq = 1.0 + static_cast<double>(cls % 4);
  const double theta = 3.14159265358979323846 * cls / std::max(1, k);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double phase = rng.uniform(0.0, 6.28318530717958648);

  Image img({size, size, 3});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (static_cast<double>(x) * ct + static_cast<double>(y) * st) /
                       static_cast<double>(size);
      const double g = 0.5 + 0.5 * std::sin(6.28318530717958648 * freq * u + phase);
      const double lum = 0.75 + 0.40 * g;
      for (std::size_t c = 0; c < 3; ++c) {
        const double noise = 0.05 * (rng.uniform() - 0.5);
        img(y, x, c) = quantize_255(base[c] * lum + noise);
      }
    }
  }
  return img;
}

/// Overhead-style mosaic: a globally periodic two-tone field (so any crop of
/// the image carries the scene signature), muted rectangular patches, and
/// parallel road strokes. Field orientation and period, patch scale, stroke
/// geometry and a palette tilt all depend on the latent scene type.
inline Image make_rs_image(std::size_t size, int scene, int k, RngStream& rng) {
  const double s = static_cast<double>(size);
  const double pi = 3.14159265358979323846;

  // Earth-tone palette pair: a coarse scene-dependent tilt plus a per-image
  // tint, so images carry an identity signal that survives cropping.
  const double tilt = fract(0.17 + scene * 0.61803398874989485);
  const double tint = rng.uniform(-0.06, 0.06);
  const double lum = rng.uniform(-0.08, 0.08);
  double tone_a[3], tone_b[3];
  hsv_to_rgb(0.08 + 0.22 * tilt + tint, 0.30 + 0.20 * tilt,
             0.55 + 0.15 * (1.0 - tilt) + lum, tone_a);
  hsv_to_rgb(0.20 + 0.45 * tilt + tint, 0.25 + 0.25 * (1.0 - tilt),
             0.30 + 0.20 * tilt + lum, tone_b);

  // Scene geometry: stripe-field orientation and period, per-image phase.
  const double theta = pi * scene / std::max(1, k) + rng.uniform(-0.06, 0.06);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double period = s / (2.0 + static_cast<double>((scene * 3) % 6));
  const double phase = rng.uniform(0.0, period);

  Image img({size, size, 3});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double proj = ct * static_cast<double>(x) + st * static_cast<double>(y) + phase;
      const double wave = 0.5 + 0.5 * std::sin(2.0 * pi * proj / period);
      // soften the field into two-tone bands
      const double mix = wave * wave * (3.0 - 2.0 * wave);
      for (std::size_t c = 0; c < 3; ++c)
        img(y, x, c) = static_cast<float>(tone_a[c] * mix + tone_b[c] * (1.0 - mix));
    }
  }

  // Field patches, muted so the periodic signature survives underneath.
  const int n_patches = 2 + scene % 4;
  const double patch_scale = s / (2.5 + static_cast<double>(scene % 4));
  for (int p = 0; p < n_patches; ++p) {
    const std::size_t pw = std::max<std::size_t>(
        2, static_cast<std::size_t>(patch_scale * rng.uniform(0.5, 1.2)));
    const std::size_t ph = std::max<std::size_t>(
        2, static_cast<std::size_t>(patch_scale * rng.uniform(0.5, 1.2)));
    const std::size_t px = rng.uniform_index(size);
    const std::size_t py = rng.uniform_index(size);
    double pc[3];
    hsv_to_rgb(fract(0.05 + 0.3 * tilt + 0.15 * rng.uniform()),
               rng.uniform(0.2, 0.5), rng.uniform(0.35, 0.75), pc);
    for (std::size_t y = py; y < std::min(size, py + ph); ++y)
      for (std::size_t x = px; x < std::min(size, px + pw); ++x)
        for (std::size_t c = 0; c < 3; ++c)
          img(y, x, c) = static_cast<float>(0.70 * img(y, x, c) + 0.30 * pc[c]);
  }

  // Road strokes: a sparser dark family crossing the stripe field.
  const double road_theta = theta + pi / 2.0 + rng.uniform(-0.05, 0.05);
  const double rt = std::cos(road_theta), rs_ = std::sin(road_theta);
  const double spacing = s / (1.0 + static_cast<double>((scene * 7) % 3));
  const double width = 0.6 + static_cast<double>(scene % 2) * 0.6;
  const double offset = rng.uniform(0.0, spacing);
  const double road = 0.15;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double proj =
          rt * static_cast<double>(x) + rs_ * static_cast<double>(y) - offset;
      const double d = std::fabs(proj - spacing * std::round(proj / spacing));
      if (d <= width)
        for (std::size_t c = 0; c < 3; ++c)
          img(y, x, c) = static_cast<float>(0.35 * img(y, x, c) + 0.65 * road);
    }
  }

  // Sensor noise, then snap to the 8-bit grid for lossless PNG round trips.
  for (std::size_t i = 0; i < img.numel(); ++i)
    img[i] = quantize_255(img[i] + 0.03 * (rng.uniform() - 0.5));
  return img;
}

}  // namespace detail

/// Deterministic synthetic corpus. Labeled natural images are class-balanced
/// (counts per class differ by at most one).
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  RngStream root(spec.seed);

  RngStream nat_stream = root.fork("synthetic/natural");
  for (std::size_t i = 0; i < spec.n_natural; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(spec.k_classes));
    RngStream img_rng = nat_stream.fork(0x4e41545552414cULL, i);
    corpus.natural.images.push_back(
        detail::make_natural_image(spec.image_size, cls, spec.k_classes, img_rng));
    corpus.natural.labels.push_back(cls);
  }
  corpus.natural.class_names.resize(spec.k_classes);
  for (int c = 0; c < spec.k_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02d", c);
    corpus.natural.class_names[c] = buf;
  }

  RngStream rs_stream = root.fork("synthetic/rs");
  for (std::size_t i = 0; i < spec.n_rs; ++i) {
    RngStream img_rng = rs_stream.fork(0x5253ULL, i);
    const int scene = static_cast<int>(img_rng.uniform_index(spec.k_classes));
    corpus.rs.images.push_back(
        detail::make_rs_image(spec.image_size, scene, spec.k_classes, img_rng));
    corpus.rs_latent_types.push_back(scene);
  }

  corpus.natural.validate();
  corpus.rs.validate();
  return corpus;
}

/// Labeled overhead-style dataset for probing: an independent draw from the
/// same mosaic generator with the latent scene type exposed as the label.
inline LabeledDataset generate_rs_labeled(const SyntheticCorpusSpec& spec,
                                          std::size_t n_images) {
  spec.validate();
  LabeledDataset ds;
  RngStream stream = RngStream(spec.seed).fork("synthetic/rs-labeled");
  for (std::size_t i = 0; i < n_images; ++i) {
    const int scene = static_cast<int>(i % static_cast<std::size_t>(spec.k_classes));
    RngStream img_rng = stream.fork(0x52534cULL, i);
    ds.images.push_back(
        detail::make_rs_image(spec.image_size, scene, spec.k_classes, img_rng));
    ds.labels.push_back(scene);
  }
  ds.class_names.resize(spec.k_classes);
  for (int c = 0; c < spec.k_classes; ++c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%02d", c);
    ds.class_names[c] = buf;
  }
  ds.validate();
  return ds;
}

}  // namespace gersp
