// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/core/tensor.hpp"

namespace gersp {

/// Fixed-capacity FIFO of unit-norm key features. Starts empty; oldest
/// entries are overwritten first once full.
template <typename Real>
class NegativeQueue {
public:
  NegativeQueue() = default;
  NegativeQueue(std::size_t capacity, std::size_t dim)
      : capacity_(capacity), dim_(dim), storage_({capacity, dim}) {
    if (capacity == 0 || dim == 0)
      throw ConfigError("negative queue: capacity and dim must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t filled() const { return filled_; }
  std::size_t head() const { return head_; }
  const Tensor<Real>& storage() const { return storage_; }

  /// Writes keys at the head with wraparound. Keys must be unit rows.
  void push(const Tensor<Real>& keys) {
    if (keys.rank() != 2 || keys.dim(1) != dim_)
      throw ConfigError("negative queue: key dim mismatch");
    const std::size_t b = keys.dim(0);
    if (b > capacity_)
      throw ConfigError("negative queue: push larger than capacity");
    for (std::size_t i = 0; i < b; ++i) {
      double n = 0;
      for (std::size_t j = 0; j < dim_; ++j)
        n += static_cast<double>(keys(i, j)) * static_cast<double>(keys(i, j));
      if (std::fabs(std::sqrt(n) - 1.0) > 1e-5)
        throw ConfigError("negative queue: keys must be unit-norm");
    }
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) storage_(head_, j) = keys(i, j);
      head_ = (head_ + 1) % capacity_;
    }
    filled_ = std::min(filled_ + b, capacity_);
  }

  /// Valid entries in oldest-to-newest order.
  std::vector<std::size_t> fifo_order() const {
    std::vector<std::size_t> order(filled_);
    // When full, head is the oldest slot; when filling, slot 0 is.
    const std::size_t start = filled_ == capacity_ ? head_ : 0;
    for (std::size_t i = 0; i < filled_; ++i)
      order[i] = (start + i) % capacity_;
    return order;
  }

private:
  std::size_t capacity_ = 0, dim_ = 0;
  Tensor<Real> storage_;
  std::size_t head_ = 0;
  std::size_t filled_ = 0;
};

}  // namespace gersp
