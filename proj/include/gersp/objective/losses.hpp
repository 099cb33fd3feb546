// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/core/tensor.hpp"
#include "gersp/objective/queue.hpp"

namespace gersp {

/// Per-iteration loss record: l_total = l_ct + alpha * l_ce, exactly.
template <typename Real>
struct LossBreakdown {
  Real l_ct = 0;
  Real l_ce = 0;
  Real l_total = 0;
  Real alpha = 1;
};

template <typename Real>
LossBreakdown<Real> total_loss(Real l_ct, Real l_ce, Real alpha) {
  if (alpha < 0) throw ConfigError("total_loss: alpha must be >= 0");
  LossBreakdown<Real> b;
  b.l_ct = l_ct;
  b.l_ce = l_ce;
  b.alpha = alpha;
  b.l_total = l_ct + alpha * l_ce;
  return b;
}

/// Mean softmax cross-entropy with log-sum-exp stabilization.
template <typename Real>
Real cross_entropy(const Tensor<Real>& logits, const std::vector<int>& labels) {
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw ConfigError("cross_entropy: batch size mismatch");
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= static_cast<int>(k))
      throw ConfigError("cross_entropy: label out of range");
    double mx = static_cast<double>(logits(i, 0));
    for (std::size_t j = 1; j < k; ++j)
      mx = std::max(mx, static_cast<double>(logits(i, j)));
    double lse = 0;
    for (std::size_t j = 0; j < k; ++j)
      lse += std::exp(static_cast<double>(logits(i, j)) - mx);
    total += std::log(lse) - (static_cast<double>(logits(i, static_cast<std::size_t>(y))) - mx);
  }
  return static_cast<Real>(total / static_cast<double>(b));
}

/// d(mean CE)/d(logits), scaled by `weight`: weight * (softmax - onehot) / B.
template <typename Real>
Tensor<Real> cross_entropy_backward(const Tensor<Real>& logits,
                                    const std::vector<int>& labels, Real weight) {
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  Tensor<Real> d({b, k});
  for (std::size_t i = 0; i < b; ++i) {
    double mx = static_cast<double>(logits(i, 0));
    for (std::size_t j = 1; j < k; ++j)
      mx = std::max(mx, static_cast<double>(logits(i, j)));
    double lse = 0;
    for (std::size_t j = 0; j < k; ++j)
      lse += std::exp(static_cast<double>(logits(i, j)) - mx);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(logits(i, j)) - mx) / lse;
      const double y = (static_cast<int>(j) == labels[i]) ? 1.0 : 0.0;
      d(i, j) = static_cast<Real>(static_cast<double>(weight) * (p - y) /
                                  static_cast<double>(b));
    }
  }
  return d;
}

namespace detail {

/// Per-sample contrastive logits: positive similarity first, then one
/// similarity per valid queue row, all divided by tau.
template <typename Real>
Tensor<Real> info_nce_logits(const Tensor<Real>& z_q, const Tensor<Real>& z_k_plus,
                             const NegativeQueue<Real>& queue, Real tau) {
  const std::size_t b = z_q.dim(0), d = z_q.dim(1);
  const std::size_t nq = queue.filled();
  Tensor<Real> logits({b, 1 + nq});
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j)
      s += static_cast<double>(z_q(i, j)) * static_cast<double>(z_k_plus(i, j));
    logits(i, 0) = static_cast<Real>(s / static_cast<double>(tau));
    for (std::size_t q = 0; q < nq; ++q) {
      double t = 0;
      for (std::size_t j = 0; j < d; ++j)
        t += static_cast<double>(z_q(i, j)) * static_cast<double>(queue.storage()(q, j));
      logits(i, 1 + q) = static_cast<Real>(t / static_cast<double>(tau));
    }
  }
  return logits;
}

}  // namespace detail

/// InfoNCE over unit-norm features: the positive pair competes against every
/// queued key at temperature tau. An empty queue is legal (positive only).
template <typename Real>
Real info_nce(const Tensor<Real>& z_q, const Tensor<Real>& z_k_plus,
              const NegativeQueue<Real>& queue, Real tau) {
  if (!(tau > Real(0))) throw ConfigError("info_nce: tau must be > 0");
  if (!z_q.same_shape(z_k_plus))
    throw ConfigError("info_nce: query/key shape mismatch");
  if (queue.dim() != z_q.dim(1))
    throw ConfigError("info_nce: queue dim mismatch");
  const Tensor<Real> logits = detail::info_nce_logits(z_q, z_k_plus, queue, tau);
  const std::vector<int> zeros(z_q.dim(0), 0);
  return cross_entropy(logits, zeros);
}

/// Gradient of info_nce w.r.t. z_q, scaled by `weight`. Keys and queue rows
/// are constants.
template <typename Real>
Tensor<Real> info_nce_backward(const Tensor<Real>& z_q, const Tensor<Real>& z_k_plus,
                               const NegativeQueue<Real>& queue, Real tau, Real weight) {
  const std::size_t b = z_q.dim(0), d = z_q.dim(1);
  const std::size_t nq = queue.filled();
  const Tensor<Real> logits = detail::info_nce_logits(z_q, z_k_plus, queue, tau);
  const std::vector<int> zeros(b, 0);
  const Tensor<Real> dlogits = cross_entropy_backward(logits, zeros, weight);

  Tensor<Real> dz({b, d});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double g = static_cast<double>(dlogits(i, 0)) * static_cast<double>(z_k_plus(i, j));
      for (std::size_t q = 0; q < nq; ++q)
        g += static_cast<double>(dlogits(i, 1 + q)) *
             static_cast<double>(queue.storage()(q, j));
      dz(i, j) = static_cast<Real>(g / static_cast<double>(tau));
    }
  }
  return dz;
}

}  // namespace gersp
