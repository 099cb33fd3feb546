// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gersp/core/rng.hpp"
#include "gersp/model/backbone.hpp"

namespace gersp {

/// Two fully connected layers with ReLU, output rows L2-normalized.
template <typename Real>
class Projector {
public:
  Projector() = default;
  Projector(std::size_t in, std::size_t hidden, std::size_t out)
      : fc1_(in, hidden), fc2_(hidden, out) {}

  struct Cache {
    typename Linear<Real>::Cache c1, c2;
    Tensor<Real> h;       // post-relu hidden (mask)
    Tensor<Real> unnorm;  // fc2 output before normalization
    std::vector<Real> norms;
  };

  static constexpr Real kNormFloor = Real(1e-12);

  Tensor<Real> forward(const Tensor<Real>& pooled, Cache* cache) {
    Tensor<Real> h = relu(fc1_.forward(pooled, cache ? &cache->c1 : nullptr));
    if (cache) cache->h = h;
    Tensor<Real> u = fc2_.forward(h, cache ? &cache->c2 : nullptr);
    const std::size_t b = u.dim(0), d = u.dim(1);
    Tensor<Real> z({b, d});
    std::vector<Real> norms(b);
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j)
        s += static_cast<double>(u(i, j)) * static_cast<double>(u(i, j));
      norms[i] = std::max(static_cast<Real>(std::sqrt(s)), kNormFloor);
      for (std::size_t j = 0; j < d; ++j) z(i, j) = u(i, j) / norms[i];
    }
    if (cache) {
      cache->unnorm = u;
      cache->norms = std::move(norms);
    }
    return z;
  }

  Tensor<Real> backward(const Tensor<Real>& dz, const Cache& cache) {
    const std::size_t b = dz.dim(0), d = dz.dim(1);
    Tensor<Real> du({b, d});
    for (std::size_t i = 0; i < b; ++i) {
      const Real n = cache.norms[i];
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j)
        dot += static_cast<double>(cache.unnorm(i, j)) / n * static_cast<double>(dz(i, j));
      for (std::size_t j = 0; j < d; ++j) {
        const Real z = cache.unnorm(i, j) / n;
        du(i, j) = (dz(i, j) - z * static_cast<Real>(dot)) / n;
      }
    }
    Tensor<Real> dh = fc2_.backward(du, cache.c2);
    dh = relu_backward(dh, cache.h);
    return fc1_.backward(dh, cache.c1);
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<Real>>& out) {
    fc1_.collect_params(prefix + "/fc1", out);
    fc2_.collect_params(prefix + "/fc2", out);
  }

private:
  Linear<Real> fc1_, fc2_;
};

/// Student and teacher parameter sets. The teacher mirrors the student's
/// backbone and projector; only the student carries the classification head.
template <typename Real>
struct EncoderBundle {
  EncoderSpec spec;
  Backbone<Real> student_backbone;
  Projector<Real> student_projector;
  Linear<Real> student_predictor;
  Backbone<Real> teacher_backbone;
  Projector<Real> teacher_projector;

  std::vector<ParamRef<Real>> student_params() {
    std::vector<ParamRef<Real>> out;
    student_backbone.collect_params("backbone", out);
    student_projector.collect_params("projector", out);
    student_predictor.collect_params("predictor", out);
    return out;
  }

  /// EMA-coupled subset: backbone + projector (name-congruent with teacher).
  std::vector<ParamRef<Real>> student_ema_params() {
    std::vector<ParamRef<Real>> out;
    student_backbone.collect_params("backbone", out);
    student_projector.collect_params("projector", out);
    return out;
  }

  std::vector<ParamRef<Real>> teacher_params() {
    std::vector<ParamRef<Real>> out;
    teacher_backbone.collect_params("backbone", out);
    teacher_projector.collect_params("projector", out);
    return out;
  }

  std::vector<StateRef<Real>> student_state() {
    std::vector<StateRef<Real>> out;
    student_backbone.collect_state("backbone", out);
    return out;
  }

  std::vector<StateRef<Real>> teacher_state() {
    std::vector<StateRef<Real>> out;
    teacher_backbone.collect_state("backbone", out);
    return out;
  }

  void zero_grads() {
    for (auto& p : student_params()) p.grad->zero();
  }
};

/// Seeded parameter initialization: fan-in-scaled normal for conv/linear
/// weights, BN scale 1 / shift 0, zero biases. The teacher starts as an exact
/// copy of the student.
template <typename Real>
EncoderBundle<Real> init_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  EncoderBundle<Real> bundle;
  bundle.spec = spec;
  bundle.student_backbone = Backbone<Real>(spec);
  bundle.student_projector =
      Projector<Real>(spec.feature_dim(), spec.proj_hidden_dim, spec.proj_out_dim);
  bundle.student_predictor =
      Linear<Real>(spec.feature_dim(), static_cast<std::size_t>(spec.n_classes));

  RngStream init_rng = RngStream(seed).fork("init");
  for (auto& p : bundle.student_params()) {
    Tensor<Real>& t = *p.value;
    if (p.name.ends_with("/W")) {
      // conv: {cout,cin,k,k}; linear: {out,in} — fan-in is everything but dim 0
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < t.rank(); ++d) fan_in *= t.shape()[d];
      const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] = static_cast<Real>(sigma * init_rng.normal());
    } else if (p.name.ends_with("/gamma")) {
      t.fill(Real(1));
    } else {
      t.zero();
    }
  }

  bundle.teacher_backbone = bundle.student_backbone;
  bundle.teacher_projector = bundle.student_projector;
  return bundle;
}

/// Classification head: single affine map {B,D} -> {B,K}.
template <typename Real>
Tensor<Real> predict_logits(const Linear<Real>& predictor, const Tensor<Real>& pooled) {
  return predictor.forward(pooled, nullptr);
}

/// Applies fn to G contiguous groups of a permuted batch, then restores the
/// original row order. fn(group_batch, group_index) -> {b/G, D}.
template <typename Real, typename Fn>
Tensor<Real> shuffled_group_apply_with_perm(const Tensor<Real>& batch, std::size_t groups,
                                            const std::vector<std::size_t>& perm, Fn&& fn) {
  const std::size_t b = batch.dim(0);
  if (groups == 0 || b % groups != 0)
    throw ConfigError("shuffled forward: group count must divide the batch size");
  if (perm.size() != b)
    throw ConfigError("shuffled forward: permutation length must equal the batch size");
  const std::size_t gs = b / groups;
  const std::size_t row = batch.numel() / b;

  Tensor<Real> out;
  for (std::size_t g = 0; g < groups; ++g) {
    Tensor<Real> group({gs, batch.dim(1), batch.dim(2), batch.dim(3)});
    for (std::size_t j = 0; j < gs; ++j) {
      const std::size_t src = perm[g * gs + j];
      std::copy(batch.data() + src * row, batch.data() + (src + 1) * row,
                group.data() + j * row);
    }
    Tensor<Real> feats = fn(group, g);
    if (g == 0) out = Tensor<Real>({b, feats.dim(1)});
    const std::size_t d = feats.dim(1);
    for (std::size_t j = 0; j < gs; ++j) {
      const std::size_t dst = perm[g * gs + j];
      std::copy(feats.data() + j * d, feats.data() + (j + 1) * d, out.data() + dst * d);
    }
  }
  return out;
}

/// As above with a freshly drawn random permutation.
template <typename Real, typename Fn>
Tensor<Real> shuffled_group_apply(const Tensor<Real>& batch, std::size_t groups,
                                  RngStream& rng, Fn&& fn) {
  return shuffled_group_apply_with_perm(batch, groups, rng.permutation(batch.dim(0)),
                                        std::forward<Fn>(fn));
}

/// Shuffling-BN forward: each group is normalized with its own batch
/// statistics (multi-device emulation); rows come back in input order.
template <typename Real>
Tensor<Real> shuffled_forward(Backbone<Real>& backbone, const Tensor<Real>& batch,
                              std::size_t groups, RngStream& rng,
                              BnMode mode = BnMode::group_stats) {
  return shuffled_group_apply(batch, groups, rng,
                              [&](const Tensor<Real>& group, std::size_t) {
                                return backbone.forward_pooled(group, mode, nullptr);
                              });
}

}  // namespace gersp
