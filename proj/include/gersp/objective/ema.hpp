// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/model/layers.hpp"

namespace gersp {

/// Momentum update W_t <- m*W_t + (1-m)*W_s for every name-matched pair.
template <typename Real>
void ema_update(std::vector<ParamRef<Real>> teacher_params,
                std::vector<ParamRef<Real>> student_params, Real m) {
  if (!(m >= Real(0) && m <= Real(1)))
    throw ConfigError("ema_update: momentum must be in [0,1]");
  if (teacher_params.size() != student_params.size())
    throw ConfigError("ema_update: parameter lists differ in length");
  for (std::size_t i = 0; i < teacher_params.size(); ++i) {
    auto& t = teacher_params[i];
    auto& s = student_params[i];
    if (t.name != s.name)
      throw ConfigError("ema_update: parameter name mismatch at '" + t.name + "' vs '" +
                        s.name + "'");
    if (!t.value->same_shape(*s.value))
      throw ConfigError("ema_update: shape mismatch for parameter '" + t.name + "'");
    Tensor<Real>& wt = *t.value;
    const Tensor<Real>& ws = *s.value;
    for (std::size_t j = 0; j < wt.numel(); ++j)
      wt[j] = m * wt[j] + (Real(1) - m) * ws[j];
  }
}

/// Copies batch-norm running statistics from student to teacher.
template <typename Real>
void copy_state(std::vector<StateRef<Real>> dst, std::vector<StateRef<Real>> src) {
  if (dst.size() != src.size())
    throw ConfigError("copy_state: state lists differ in length");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || !dst[i].value->same_shape(*src[i].value))
      throw ConfigError("copy_state: mismatch at '" + dst[i].name + "'");
    *dst[i].value = *src[i].value;
  }
}

/// EMA-couples running statistics instead of copying (configuration flag).
template <typename Real>
void ema_state(std::vector<StateRef<Real>> dst, std::vector<StateRef<Real>> src, Real m) {
  if (dst.size() != src.size())
    throw ConfigError("ema_state: state lists differ in length");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || !dst[i].value->same_shape(*src[i].value))
      throw ConfigError("ema_state: mismatch at '" + dst[i].name + "'");
    Tensor<Real>& t = *dst[i].value;
    const Tensor<Real>& s = *src[i].value;
    for (std::size_t j = 0; j < t.numel(); ++j)
      t[j] = m * t[j] + (Real(1) - m) * s[j];
  }
}

}  // namespace gersp
