// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gersp/augment/augment.hpp"
#include "gersp/core/parallel.hpp"
#include "gersp/core/rng.hpp"
#include "gersp/data/dataset.hpp"

namespace gersp {

/// Equal-sized paired sub-batches: augmented labeled natural images plus two
/// augmented views of unlabeled overhead images. Tensors are CHW, standardized.
template <typename Real>
struct DualBatch {
  Tensor<Real> natural_images;  // {B, 3, S, S}
  std::vector<int> natural_labels;
  Tensor<Real> rs_view_q;  // {B, 3, S, S}
  Tensor<Real> rs_view_k;  // {B, 3, S, S}

  // Source indices for provenance checks (view_q and view_k share rs_indices).
  std::vector<std::size_t> natural_indices;
  std::vector<std::size_t> rs_indices;

  std::size_t batch_size() const { return natural_labels.size(); }
};

namespace detail {

template <typename Real>
void write_standardized(Tensor<Real>& batch, std::size_t slot, const Image& img,
                        const ChannelStats& stats) {
  const std::size_t s = img.dim(0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x)
        batch(slot, c, y, x) = static_cast<Real>(
            (img(y, x, c) - stats.mean[c]) / stats.std[c]);
}

// Without-replacement cursor over a seeded per-epoch permutation.
class EpochCursor {
public:
  EpochCursor(RngStream base, std::size_t n) : base_(std::move(base)), n_(n) {}

  std::size_t next() {
    if (pos_ >= perm_.size()) {
      perm_ = base_.fork(0x45504f4348ULL, epoch_).permutation(n_);
      pos_ = 0;
      ++epoch_;
    }
    return perm_[pos_++];
  }

  std::uint64_t epochs_started() const { return epoch_; }

private:
  RngStream base_;
  std::size_t n_ = 0;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

}  // namespace detail

/// Produces the per-iteration dual batches. The delivered stream is a pure
/// function of (seed, dataset sizes, policy, batch size); augmentation work is
/// spread across workers with one rng sub-stream per slot, so the parallel
/// result equals the serial one.
template <typename Real>
class DualBatchSampler {
public:
  DualBatchSampler(std::uint64_t seed, std::size_t n_natural, std::size_t n_rs)
      : root_(RngStream(seed).fork("sampler")),
        natural_cursor_(root_.fork("natural"), n_natural),
        rs_cursor_(root_.fork("rs"), n_rs),
        n_natural_(n_natural),
        n_rs_(n_rs) {
    if (n_natural == 0 || n_rs == 0)
      throw ConfigError("dual batch sampler: both datasets must be non-empty");
  }

  DualBatch<Real> next(const LabeledDataset& labeled, const UnlabeledDataset& unlabeled,
                       const AugmentationPolicy& policy, const ChannelStats& stats,
                       std::size_t batch_size) {
    if (labeled.size() != n_natural_ || unlabeled.size() != n_rs_)
      throw ConfigError("dual batch sampler: dataset size changed between calls");
    policy.validate();

    const std::size_t b = batch_size;
    const std::size_t s = policy.out_size;
    DualBatch<Real> batch;
    batch.natural_images = Tensor<Real>({b, 3, s, s});
    batch.rs_view_q = Tensor<Real>({b, 3, s, s});
    batch.rs_view_k = Tensor<Real>({b, 3, s, s});
    batch.natural_labels.resize(b);
    batch.natural_indices.resize(b);
    batch.rs_indices.resize(b);

    for (std::size_t i = 0; i < b; ++i) {
      batch.natural_indices[i] = natural_cursor_.next();
      batch.rs_indices[i] = rs_cursor_.next();
      batch.natural_labels[i] = labeled.labels[batch.natural_indices[i]];
    }

    const std::uint64_t draw_base = draws_;
    draws_ += b;
    parallel_for(b, [&](std::size_t i) {
      const std::uint64_t draw = draw_base + i;
      RngStream nat_rng = root_.fork(0x4e4154ULL, draw);
      batch.natural_labels[i] = labeled.labels[batch.natural_indices[i]];
      const Image aug =
          strong_augment(labeled.images[batch.natural_indices[i]], policy, nat_rng);
      detail::write_standardized(batch.natural_images, i, aug, stats);

      const RngStream pair_rng = root_.fork(0x525350ULL, draw);
      auto [vq, vk] =
          make_contrastive_pair(unlabeled.images[batch.rs_indices[i]], policy, pair_rng);
      detail::write_standardized(batch.rs_view_q, i, vq, stats);
      detail::write_standardized(batch.rs_view_k, i, vk, stats);
    });
    return batch;
  }

  std::uint64_t rs_epochs_started() const { return rs_cursor_.epochs_started(); }

private:
  RngStream root_;
  detail::EpochCursor natural_cursor_;
  detail::EpochCursor rs_cursor_;
  std::size_t n_natural_ = 0;
  std::size_t n_rs_ = 0;
  std::uint64_t draws_ = 0;
};

}  // namespace gersp
