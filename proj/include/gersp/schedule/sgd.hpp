// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/model/layers.hpp"

namespace gersp {

/// SGD with momentum and (optionally excluded) L2 weight decay:
///   g <- grad + wd*param;  v <- momentum*v + g;  param <- param - lr*v
template <typename Real>
class OptimizerState {
public:
  OptimizerState() = default;
  OptimizerState(Real momentum, Real weight_decay, bool decay_bn_and_bias = true)
      : momentum_(momentum), weight_decay_(weight_decay),
        decay_bn_and_bias_(decay_bn_and_bias) {}

  Real momentum() const { return momentum_; }
  Real weight_decay() const { return weight_decay_; }

  void step(const std::vector<ParamRef<Real>>& params, Real lr) {
    for (const auto& p : params) {
      Tensor<Real>& w = *p.value;
      const Tensor<Real>& g = *p.grad;
      if (!w.same_shape(g))
        throw ConfigError("sgd_step: gradient shape mismatch for '" + p.name + "'");
      Tensor<Real>& v = velocity(p.name, w);
      const bool decays = decay_bn_and_bias_ || p.name.ends_with("/W");
      const Real wd = decays ? weight_decay_ : Real(0);
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const Real grad = g[i] + wd * w[i];
        v[i] = momentum_ * v[i] + grad;
        w[i] -= lr * v[i];
      }
    }
  }

private:
  Tensor<Real>& velocity(const std::string& name, const Tensor<Real>& like) {
    auto it = velocity_.find(name);
    if (it == velocity_.end())
      it = velocity_.emplace(name, Tensor<Real>::zeros_like(like)).first;
    else if (!it->second.same_shape(like))
      throw ConfigError("sgd_step: velocity shape mismatch for '" + name + "'");
    return it->second;
  }

  Real momentum_ = Real(0.9);
  Real weight_decay_ = Real(0);
  bool decay_bn_and_bias_ = true;
  std::unordered_map<std::string, Tensor<Real>> velocity_;
};

/// Free-function form used by tests: one update over an explicit param list.
template <typename Real>
void sgd_step(const std::vector<ParamRef<Real>>& params, OptimizerState<Real>& state,
              Real lr) {
  state.step(params, lr);
}

}  // namespace gersp
