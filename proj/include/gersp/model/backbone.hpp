// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gersp/core/errors.hpp"
#include "gersp/model/layers.hpp"

namespace gersp {

enum class BlockKind { basic, bottleneck };
enum class StemKind { conv3, conv7_pool };

/// Backbone/head geometry. Two presets: a reduced-width residual net for
/// desk-scale runs and a wide 4-stage bottleneck net (2048-d pooled feature).
struct EncoderSpec {
  std::vector<std::size_t> stage_widths;
  std::vector<std::size_t> blocks_per_stage;
  BlockKind block = BlockKind::basic;
  StemKind stem = StemKind::conv3;
  std::size_t stem_stride = 1;  // conv3 stems only; conv7_pool is always /4
  std::size_t input_size = 224;
  std::size_t proj_hidden_dim = 2048;
  std::size_t proj_out_dim = 128;
  int n_classes = 1000;
  std::size_t bn_groups = 4;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  std::size_t expansion() const { return block == BlockKind::bottleneck ? 4 : 1; }
  std::size_t feature_dim() const { return stage_widths.back() * expansion(); }
  std::size_t n_stages() const { return stage_widths.size(); }

  void validate() const {
    if (stage_widths.size() != blocks_per_stage.size() || stage_widths.size() < 2)
      throw ConfigError("encoder spec: stage_widths/blocks_per_stage must match, length >= 2");
    for (std::size_t w : stage_widths)
      if (w == 0) throw ConfigError("encoder spec: zero stage width");
    for (std::size_t b : blocks_per_stage)
      if (b == 0) throw ConfigError("encoder spec: zero blocks in a stage");
    if (proj_out_dim < 2) throw ConfigError("encoder spec: proj_out_dim must be >= 2");
    if (n_classes < 2) throw ConfigError("encoder spec: n_classes must be >= 2");
    if (bn_groups < 2) throw ConfigError("encoder spec: bn_groups must be >= 2");
    if (stem_stride != 1 && stem_stride != 2)
      throw ConfigError("encoder spec: stem_stride must be 1 or 2");
    if (input_size == 0) throw ConfigError("encoder spec: input_size must be > 0");
  }

  static EncoderSpec desk(int n_classes) {
    EncoderSpec s;
    s.stage_widths = {16, 32, 64, 128};
    s.blocks_per_stage = {1, 1, 1, 1};
    s.block = BlockKind::basic;
    s.stem = StemKind::conv3;
    s.stem_stride = 2;
    s.input_size = 32;
    s.proj_hidden_dim = 128;
    s.proj_out_dim = 128;
    s.n_classes = n_classes;
    return s;
  }

  static EncoderSpec full(int n_classes = 1000) {
    EncoderSpec s;
    s.stage_widths = {64, 128, 256, 512};
    s.blocks_per_stage = {3, 4, 6, 3};
    s.block = BlockKind::bottleneck;
    s.stem = StemKind::conv7_pool;
    s.input_size = 224;
    s.proj_hidden_dim = 2048;
    s.proj_out_dim = 128;
    s.n_classes = n_classes;
    return s;
  }
};

template <typename Real>
class ResidualBlock {
public:
  ResidualBlock() = default;
  ResidualBlock(BlockKind kind, std::size_t cin, std::size_t width, std::size_t stride,
                double bn_momentum, double bn_eps)
      : kind_(kind) {
    const std::size_t cout = width * (kind == BlockKind::bottleneck ? 4 : 1);
    const Real mom = static_cast<Real>(bn_momentum);
    const Real eps = static_cast<Real>(bn_eps);
    if (kind == BlockKind::basic) {
      conv1_ = Conv2d<Real>(cin, width, 3, stride, 1);
      bn1_ = BatchNorm2d<Real>(width, mom, eps);
      conv2_ = Conv2d<Real>(width, width, 3, 1, 1);
      bn2_ = BatchNorm2d<Real>(width, mom, eps);
    } else {
      conv1_ = Conv2d<Real>(cin, width, 1, 1, 0);
      bn1_ = BatchNorm2d<Real>(width, mom, eps);
      conv2_ = Conv2d<Real>(width, width, 3, stride, 1);
      bn2_ = BatchNorm2d<Real>(width, mom, eps);
      conv3_ = Conv2d<Real>(width, cout, 1, 1, 0);
      bn3_ = BatchNorm2d<Real>(cout, mom, eps);
    }
    has_down_ = stride != 1 || cin != cout;
    if (has_down_) {
      down_conv_ = Conv2d<Real>(cin, cout, 1, stride, 0);
      down_bn_ = BatchNorm2d<Real>(cout, mom, eps);
    }
  }

  struct Cache {
    typename Conv2d<Real>::Cache c1, c2, c3, cd;
    typename BatchNorm2d<Real>::Cache b1, b2, b3, bd;
    Tensor<Real> r1, r2;  // post-relu intermediates (backward masks)
    Tensor<Real> out;     // block output (final relu mask)
  };

  Tensor<Real> forward(const Tensor<Real>& x, BnMode mode, Cache* cache) {
    auto* c1 = cache ? &cache->c1 : nullptr;
    auto* c2 = cache ? &cache->c2 : nullptr;
    auto* b1 = cache ? &cache->b1 : nullptr;
    auto* b2 = cache ? &cache->b2 : nullptr;

    Tensor<Real> main = relu(bn1_.forward(conv1_.forward(x, c1), mode, b1));
    if (cache) cache->r1 = main;
    if (kind_ == BlockKind::basic) {
      main = bn2_.forward(conv2_.forward(main, c2), mode, b2);
    } else {
      main = relu(bn2_.forward(conv2_.forward(main, c2), mode, b2));
      if (cache) cache->r2 = main;
      main = bn3_.forward(conv3_.forward(main, cache ? &cache->c3 : nullptr), mode,
                          cache ? &cache->b3 : nullptr);
    }

    if (has_down_) {
      Tensor<Real> skip = down_bn_.forward(
          down_conv_.forward(x, cache ? &cache->cd : nullptr), mode,
          cache ? &cache->bd : nullptr);
      for (std::size_t i = 0; i < main.numel(); ++i) main[i] += skip[i];
    } else {
      for (std::size_t i = 0; i < main.numel(); ++i) main[i] += x[i];
    }
    Tensor<Real> out = relu(main);
    if (cache) cache->out = out;
    return out;
  }

  Tensor<Real> backward(const Tensor<Real>& dy, Cache& cache) {
    Tensor<Real> d = relu_backward(dy, cache.out);

    // main branch
    Tensor<Real> dmain;
    if (kind_ == BlockKind::basic) {
      dmain = conv2_.backward(bn2_.backward(d, cache.b2), cache.c2);
    } else {
      dmain = conv3_.backward(bn3_.backward(d, cache.b3), cache.c3);
      dmain = relu_backward(dmain, cache.r2);
      dmain = conv2_.backward(bn2_.backward(dmain, cache.b2), cache.c2);
    }
    dmain = relu_backward(dmain, cache.r1);
    Tensor<Real> dx = conv1_.backward(bn1_.backward(dmain, cache.b1), cache.c1);

    // skip branch
    if (has_down_) {
      Tensor<Real> dskip = down_conv_.backward(down_bn_.backward(d, cache.bd), cache.cd);
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dskip[i];
    } else {
      for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += d[i];
    }
    return dx;
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<Real>>& out) {
    conv1_.collect_params(prefix + "/conv1", out);
    bn1_.collect_params(prefix + "/bn1", out);
    conv2_.collect_params(prefix + "/conv2", out);
    bn2_.collect_params(prefix + "/bn2", out);
    if (kind_ == BlockKind::bottleneck) {
      conv3_.collect_params(prefix + "/conv3", out);
      bn3_.collect_params(prefix + "/bn3", out);
    }
    if (has_down_) {
      down_conv_.collect_params(prefix + "/down/conv", out);
      down_bn_.collect_params(prefix + "/down/bn", out);
    }
  }

  void collect_state(const std::string& prefix, std::vector<StateRef<Real>>& out) {
    bn1_.collect_state(prefix + "/bn1", out);
    bn2_.collect_state(prefix + "/bn2", out);
    if (kind_ == BlockKind::bottleneck) bn3_.collect_state(prefix + "/bn3", out);
    if (has_down_) down_bn_.collect_state(prefix + "/down/bn", out);
  }

private:
  BlockKind kind_ = BlockKind::basic;
  Conv2d<Real> conv1_, conv2_, conv3_;
  BatchNorm2d<Real> bn1_, bn2_, bn3_;
  bool has_down_ = false;
  Conv2d<Real> down_conv_;
  BatchNorm2d<Real> down_bn_;
};

/// Residual backbone with per-stage taps and global average pooling.
template <typename Real>
class Backbone {
public:
  Backbone() = default;

  explicit Backbone(const EncoderSpec& spec) : spec_(spec) {
    spec.validate();
    const std::size_t w0 = spec.stage_widths[0];
    if (spec.stem == StemKind::conv3) {
      stem_conv_ = Conv2d<Real>(3, w0, 3, spec.stem_stride, 1);
    } else {
      stem_conv_ = Conv2d<Real>(3, w0, 7, 2, 3);
    }
    stem_bn_ = BatchNorm2d<Real>(w0, static_cast<Real>(spec.bn_momentum),
                                 static_cast<Real>(spec.bn_eps));

    std::size_t cin = w0;
    stages_.resize(spec.n_stages());
    for (std::size_t s = 0; s < spec.n_stages(); ++s) {
      const std::size_t width = spec.stage_widths[s];
      for (std::size_t b = 0; b < spec.blocks_per_stage[s]; ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        stages_[s].emplace_back(spec.block, cin, width, stride, spec.bn_momentum,
                                spec.bn_eps);
        cin = width * spec.expansion();
      }
    }
  }

  struct Cache {
    typename Conv2d<Real>::Cache stem_conv;
    typename BatchNorm2d<Real>::Cache stem_bn;
    Tensor<Real> stem_relu;  // relu mask (pre-pool for wide stems)
    typename MaxPool2d<Real>::Cache pool;
    bool pooled = false;
    std::vector<std::vector<typename ResidualBlock<Real>::Cache>> blocks;
    std::size_t last_h = 0, last_w = 0;
  };

  /// Outputs of every stage, in order. Throws NumericError when an activation
  /// goes non-finite, naming the layer.
  std::vector<Tensor<Real>> forward_stages(const Tensor<Real>& x, BnMode mode,
                                           Cache* cache) {
    if (!x.all_finite()) throw NumericError("non-finite values in the input batch");
    if (cache) {
      cache->blocks.assign(stages_.size(), {});
      for (std::size_t s = 0; s < stages_.size(); ++s)
        cache->blocks[s].resize(stages_[s].size());
    }
    Tensor<Real> cur = relu(stem_bn_.forward(
        stem_conv_.forward(x, cache ? &cache->stem_conv : nullptr), mode,
        cache ? &cache->stem_bn : nullptr));
    if (cache) cache->stem_relu = cur;
    if (spec_.stem == StemKind::conv7_pool) {
      cur = MaxPool2d<Real>::forward(cur, cache ? &cache->pool : nullptr);
      if (cache) cache->pooled = true;
    }
    if (!cur.all_finite()) throw NumericError("non-finite activations after stem");

    std::vector<Tensor<Real>> outs;
    outs.reserve(stages_.size());
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        cur = stages_[s][b].forward(cur, mode, cache ? &cache->blocks[s][b] : nullptr);
      if (!cur.all_finite())
        throw NumericError("non-finite activations after stage" + std::to_string(s));
      outs.push_back(cur);
    }
    if (cache) {
      cache->last_h = cur.dim(2);
      cache->last_w = cur.dim(3);
    }
    return outs;
  }

  /// Backbone + GAP: {B,3,S,S} -> {B, feature_dim}.
  Tensor<Real> forward_pooled(const Tensor<Real>& x, BnMode mode, Cache* cache) {
    auto outs = forward_stages(x, mode, cache);
    return global_avg_pool(outs.back());
  }

  /// Backward from the pooled feature; accumulates parameter gradients.
  void backward_from_pooled(const Tensor<Real>& dpooled, Cache& cache) {
    Tensor<Real> d = global_avg_pool_backward(dpooled, cache.last_h, cache.last_w);
    for (std::size_t s = stages_.size(); s-- > 0;)
      for (std::size_t b = stages_[s].size(); b-- > 0;)
        d = stages_[s][b].backward(d, cache.blocks[s][b]);
    if (cache.pooled) d = MaxPool2d<Real>::backward(d, cache.pool);
    d = relu_backward(d, cache.stem_relu);
    stem_conv_.backward(stem_bn_.backward(d, cache.stem_bn), cache.stem_conv);
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<Real>>& out) {
    stem_conv_.collect_params(prefix + "/stem/conv", out);
    stem_bn_.collect_params(prefix + "/stem/bn", out);
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect_params(
            prefix + "/stage" + std::to_string(s) + "/block" + std::to_string(b), out);
  }

  void collect_state(const std::string& prefix, std::vector<StateRef<Real>>& out) {
    stem_bn_.collect_state(prefix + "/stem/bn", out);
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect_state(
            prefix + "/stage" + std::to_string(s) + "/block" + std::to_string(b), out);
  }

  const EncoderSpec& spec() const { return spec_; }

private:
  EncoderSpec spec_;
  Conv2d<Real> stem_conv_;
  BatchNorm2d<Real> stem_bn_;
  std::vector<std::vector<ResidualBlock<Real>>> stages_;
};

}  // namespace gersp
