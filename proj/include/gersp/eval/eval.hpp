// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gersp/augment/augment.hpp"
#include "gersp/data/dataset.hpp"
#include "gersp/model/encoder.hpp"
#include "gersp/objective/losses.hpp"
#include "gersp/schedule/schedule.hpp"
#include "gersp/schedule/sgd.hpp"
#include "gersp/trainer/config.hpp"

namespace gersp {

enum class EvalMode { finetune, probe, stage_probe };

/// Downstream classification protocol: seeded train/test splits, SGDM with a
/// step schedule, random horizontal flip during training, repeated trials.
struct EvalProtocol {
  EvalMode mode = EvalMode::probe;
  double train_fraction = 0.2;
  std::size_t trials = 5;
  std::size_t epochs = 100;
  StepSchedule schedule;  // base_lr 0.01, milestones {30,60,90}, gamma 0.1
  std::size_t batch_size = 64;
  double flip_p = 0.5;
  std::size_t resize = 224;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t stage_pool_grid = 2;
  ChannelStats normalize;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(train_fraction > 0 && train_fraction < 1))
      throw ConfigError("eval protocol: train_fraction must be in (0,1)");
    if (trials < 1) throw ConfigError("eval protocol: trials must be >= 1");
    if (batch_size == 0) throw ConfigError("eval protocol: batch_size must be > 0");
    if (resize == 0) throw ConfigError("eval protocol: resize must be > 0");
    if (stage_pool_grid == 0) throw ConfigError("eval protocol: stage_pool_grid must be > 0");
    if (!(flip_p >= 0 && flip_p <= 1))
      throw ConfigError("eval protocol: flip_p must be in [0,1]");
    schedule.validate();
  }

  static EvalProtocol desk() {
    EvalProtocol p;
    p.epochs = 30;
    p.schedule.milestones = {10, 20, 25};
    p.resize = 32;
    return p;
  }
};

/// Per-trial top-1 accuracies with mean and population standard deviation.
struct EvalReport {
  std::string mode;
  std::vector<double> per_trial;
  double mu = 0;
  double sigma = 0;
  std::string sigma_formula = "population";
  // stage_probe only: [stage][trial] plus per-stage mean/sigma
  std::vector<std::vector<double>> per_stage_trials;
  std::vector<double> per_stage_mu;
  std::vector<double> per_stage_sigma;
  nlohmann::json protocol_echo;

  void finalize() {
    mu = 0;
    for (double a : per_trial) mu += a;
    mu /= static_cast<double>(per_trial.size());
    double var = 0;
    for (double a : per_trial) var += (a - mu) * (a - mu);
    sigma = std::sqrt(var / static_cast<double>(per_trial.size()));
    per_stage_mu.clear();
    per_stage_sigma.clear();
    for (const auto& stage : per_stage_trials) {
      double m = 0;
      for (double a : stage) m += a;
      m /= static_cast<double>(stage.size());
      double v = 0;
      for (double a : stage) v += (a - m) * (a - m);
      per_stage_mu.push_back(m);
      per_stage_sigma.push_back(std::sqrt(v / static_cast<double>(stage.size())));
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"mode", mode},
                     {"per_trial", per_trial},
                     {"mu", mu},
                     {"sigma", sigma},
                     {"sigma_formula", sigma_formula},
                     {"protocol", protocol_echo}};
    if (!per_stage_trials.empty()) {
      j["per_stage_trials"] = per_stage_trials;
      j["per_stage_mu"] = per_stage_mu;
      j["per_stage_sigma"] = per_stage_sigma;
    }
    return j;
  }
};

/// Fraction of rows whose argmax matches the label; ties break to the lowest
/// index.
template <typename Real>
double top1_accuracy(const Tensor<Real>& logits, const std::vector<int>& labels) {
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw ConfigError("top1_accuracy: batch size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    if (static_cast<int>(best) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(b);
}

namespace detail {

/// Deterministic per-trial split; trial i's split is a pure function of
/// (n, seed, i). Train and test are disjoint by construction.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double train_fraction, std::uint64_t seed, std::size_t trial) {
  auto perm = RngStream(seed).fork("split", trial).permutation(n);
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::min(std::max<std::size_t>(1, n_train), n - 1);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  return {train, test};
}

/// {B,C,H,W} -> {B, C*g*g} via adaptive average pooling and flattening.
template <typename Real>
Tensor<Real> pool_to_grid(const Tensor<Real>& x, std::size_t g) {
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<Real> out({b, c * g * g});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx) {
          const std::size_t y0 = gy * h / g, y1 = std::max(y0 + 1, ((gy + 1) * h + g - 1) / g);
          const std::size_t x0 = gx * w / g, x1 = std::max(x0 + 1, ((gx + 1) * w + g - 1) / g);
          double s = 0;
          for (std::size_t y = y0; y < std::min(y1, h); ++y)
            for (std::size_t xx = x0; xx < std::min(x1, w); ++xx)
              s += static_cast<double>(x(i, ch, y, xx));
          const double area = static_cast<double>((std::min(y1, h) - y0) *
                                                  (std::min(x1, w) - x0));
          out(i, (ch * g + gy) * g + gx) = static_cast<Real>(s / area);
        }
  return out;
}

template <typename Real>
Tensor<Real> hflip_chw(const Tensor<Real>& x) {
  Tensor<Real> y(x.shape());
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t yy = 0; yy < h; ++yy)
      for (std::size_t xx = 0; xx < w; ++xx)
        y[(ch * h + yy) * w + xx] = x[(ch * h + yy) * w + (w - 1 - xx)];
  return y;
}

/// Resize + standardize each dataset image once, as CHW tensors.
template <typename Real>
std::vector<Tensor<Real>> preprocess_images(const std::vector<Image>& images,
                                            std::size_t size, const ChannelStats& stats) {
  std::vector<Tensor<Real>> out(images.size());
  parallel_for(images.size(), [&](std::size_t i) {
    const Image resized = (images[i].dim(0) == size && images[i].dim(1) == size)
                              ? images[i]
                              : resize_bilinear(images[i], size, size);
    Tensor<Real> t({3, size, size});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          t[(c * size + y) * size + x] =
              static_cast<Real>((resized(y, x, c) - stats.mean[c]) / stats.std[c]);
    out[i] = std::move(t);
  });
  return out;
}

template <typename Real>
Tensor<Real> stack_batch(const std::vector<Tensor<Real>>& images,
                         const std::vector<std::size_t>& indices,
                         const std::vector<bool>& flip) {
  const auto& shape = images[indices[0]].shape();
  Tensor<Real> batch({indices.size(), shape[0], shape[1], shape[2]});
  const std::size_t row = images[indices[0]].numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    Tensor<Real> img = flip[i] ? hflip_chw(images[indices[i]]) : images[indices[i]];
    std::copy(img.data(), img.data() + row, batch.data() + i * row);
  }
  return batch;
}

/// Frozen-backbone features for every image and every stage, original and
/// flipped orientations. features[stage][orientation] is {N, D_stage}.
template <typename Real>
std::vector<std::array<Tensor<Real>, 2>> extract_stage_features(
    Backbone<Real>& backbone, const std::vector<Tensor<Real>>& images,
    std::size_t batch_size, std::size_t grid) {
  const std::size_t n = images.size();
  std::vector<std::array<Tensor<Real>, 2>> features;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    std::vector<std::size_t> idx(b);
    for (std::size_t i = 0; i < b; ++i) idx[i] = start + i;
    for (int orient = 0; orient < 2; ++orient) {
      std::vector<bool> flip(b, orient == 1);
      Tensor<Real> batch = stack_batch(images, idx, flip);
      auto stages = backbone.forward_stages(batch, BnMode::eval, nullptr);
      if (features.empty()) {
        features.resize(stages.size());
        for (std::size_t s = 0; s < stages.size(); ++s) {
          const std::size_t d = stages[s].dim(1) * grid * grid;
          features[s][0] = Tensor<Real>({n, d});
          features[s][1] = Tensor<Real>({n, d});
        }
      }
      for (std::size_t s = 0; s < stages.size(); ++s) {
        Tensor<Real> pooled = pool_to_grid(stages[s], grid);
        const std::size_t d = pooled.dim(1);
        std::copy(pooled.data(), pooled.data() + b * d,
                  features[s][static_cast<std::size_t>(orient)].data() + start * d);
      }
    }
  }
  return features;
}

template <typename Real>
Linear<Real> make_head(std::size_t dim, int k, RngStream rng) {
  Linear<Real> head(dim, static_cast<std::size_t>(k));
  const double sigma = std::sqrt(2.0 / static_cast<double>(dim));
  for (std::size_t i = 0; i < head.weight().numel(); ++i)
    head.weight()[i] = static_cast<Real>(sigma * rng.normal());
  head.bias().zero();
  return head;
}

/// Trains a linear head on cached features; returns test top-1.
template <typename Real>
double train_probe_head(const std::array<Tensor<Real>, 2>& features,
                        const std::vector<int>& labels,
                        const std::vector<std::size_t>& train_idx,
                        const std::vector<std::size_t>& test_idx, int k,
                        const EvalProtocol& protocol, const RngStream& trial_rng) {
  const std::size_t d = features[0].dim(1);
  Linear<Real> head = make_head<Real>(d, k, trial_rng.fork("head_init"));
  OptimizerState<Real> opt(static_cast<Real>(protocol.momentum),
                           static_cast<Real>(protocol.weight_decay));
  std::vector<ParamRef<Real>> params;
  head.collect_params("head", params);

  for (std::size_t epoch = 0; epoch < protocol.epochs; ++epoch) {
    const Real lr = static_cast<Real>(step_lr(epoch, protocol.schedule));
    RngStream epoch_rng = trial_rng.fork(0x45504fULL, epoch);
    auto order = epoch_rng.permutation(train_idx.size());
    for (std::size_t start = 0; start < order.size(); start += protocol.batch_size) {
      const std::size_t b = std::min(protocol.batch_size, order.size() - start);
      Tensor<Real> x({b, d});
      std::vector<int> y(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t sample = train_idx[order[start + i]];
        const bool flip = epoch_rng.bernoulli(protocol.flip_p);
        const Tensor<Real>& src = features[flip ? 1 : 0];
        std::copy(src.data() + sample * d, src.data() + (sample + 1) * d,
                  x.data() + i * d);
        y[i] = labels[sample];
      }
      typename Linear<Real>::Cache cache;
      Tensor<Real> logits = head.forward(x, &cache);
      Tensor<Real> dlogits = cross_entropy_backward(logits, y, Real(1));
      for (auto& p : params) p.grad->zero();
      head.backward(dlogits, cache);
      opt.step(params, lr);
    }
  }

  Tensor<Real> x({test_idx.size(), d});
  std::vector<int> y(test_idx.size());
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    std::copy(features[0].data() + test_idx[i] * d,
              features[0].data() + (test_idx[i] + 1) * d, x.data() + i * d);
    y[i] = labels[test_idx[i]];
  }
  return top1_accuracy(head.forward(x, nullptr), y);
}

}  // namespace detail

/// Frozen-backbone linear evaluation on pooled last-stage features.
template <typename Real>
EvalReport linear_probe(Backbone<Real>& backbone, const LabeledDataset& dataset,
                        const EvalProtocol& protocol) {
  protocol.validate();
  dataset.validate();
  const auto images =
      detail::preprocess_images<Real>(dataset.images, protocol.resize, protocol.normalize);
  // grid 1 over the last stage is exactly global average pooling
  auto features = detail::extract_stage_features(backbone, images, protocol.batch_size, 1);
  const std::size_t last = features.size() - 1;

  EvalReport report;
  report.mode = "probe";
  for (std::size_t trial = 0; trial < protocol.trials; ++trial) {
    auto [train_idx, test_idx] = detail::split_indices(dataset.size(), protocol.train_fraction,
                                                       protocol.seed, trial);
    const RngStream trial_rng =
        RngStream(protocol.seed).fork(0x5052424dULL, trial, last);
    report.per_trial.push_back(detail::train_probe_head(
        features[last], dataset.labels, train_idx, test_idx, dataset.n_classes(),
        protocol, trial_rng));
  }
  report.finalize();
  report.protocol_echo = nlohmann::json{{"mode", "probe"},
                                        {"train_fraction", protocol.train_fraction},
                                        {"trials", protocol.trials},
                                        {"epochs", protocol.epochs},
                                        {"resize", protocol.resize},
                                        {"seed", protocol.seed}};
  return report;
}

/// Per-stage frozen linear evaluation: each stage's map is average-pooled to a
/// small grid, flattened, and probed with its own head.
template <typename Real>
EvalReport stagewise_probe(Backbone<Real>& backbone, const LabeledDataset& dataset,
                           const EvalProtocol& protocol) {
  protocol.validate();
  dataset.validate();
  const auto images =
      detail::preprocess_images<Real>(dataset.images, protocol.resize, protocol.normalize);
  auto features = detail::extract_stage_features(backbone, images, protocol.batch_size,
                                                 protocol.stage_pool_grid);

  EvalReport report;
  report.mode = "stage_probe";
  report.per_stage_trials.resize(features.size());
  for (std::size_t trial = 0; trial < protocol.trials; ++trial) {
    auto [train_idx, test_idx] = detail::split_indices(dataset.size(), protocol.train_fraction,
                                                       protocol.seed, trial);
    for (std::size_t s = 0; s < features.size(); ++s) {
      const RngStream trial_rng = RngStream(protocol.seed).fork(0x5052424dULL, trial, s);
      report.per_stage_trials[s].push_back(detail::train_probe_head(
          features[s], dataset.labels, train_idx, test_idx, dataset.n_classes(),
          protocol, trial_rng));
    }
    report.per_trial.push_back(report.per_stage_trials.back().back());
  }
  report.finalize();
  report.protocol_echo = nlohmann::json{{"mode", "stage_probe"},
                                        {"train_fraction", protocol.train_fraction},
                                        {"trials", protocol.trials},
                                        {"epochs", protocol.epochs},
                                        {"resize", protocol.resize},
                                        {"stage_pool_grid", protocol.stage_pool_grid},
                                        {"seed", protocol.seed}};
  return report;
}

/// Full fine-tuning: fresh GAP + linear head, all parameters trained.
template <typename Real>
EvalReport finetune_classifier(const Backbone<Real>& pretrained_backbone,
                               const LabeledDataset& dataset, const EvalProtocol& protocol) {
  protocol.validate();
  dataset.validate();
  const int k = dataset.n_classes();
  const auto images =
      detail::preprocess_images<Real>(dataset.images, protocol.resize, protocol.normalize);

  EvalReport report;
  report.mode = "finetune";
  for (std::size_t trial = 0; trial < protocol.trials; ++trial) {
    auto [train_idx, test_idx] = detail::split_indices(dataset.size(), protocol.train_fraction,
                                                       protocol.seed, trial);
    const RngStream trial_rng = RngStream(protocol.seed).fork("finetune", trial);

    Backbone<Real> backbone = pretrained_backbone;  // each trial starts fresh
    const std::size_t d = backbone.spec().feature_dim();
    Linear<Real> head = detail::make_head<Real>(d, k, trial_rng.fork("head_init"));

    std::vector<ParamRef<Real>> params;
    backbone.collect_params("backbone", params);
    head.collect_params("head", params);
    OptimizerState<Real> opt(static_cast<Real>(protocol.momentum),
                             static_cast<Real>(protocol.weight_decay));

    for (std::size_t epoch = 0; epoch < protocol.epochs; ++epoch) {
      const Real lr = static_cast<Real>(step_lr(epoch, protocol.schedule));
      RngStream epoch_rng = trial_rng.fork(0x45504fULL, epoch);
      auto order = epoch_rng.permutation(train_idx.size());
      for (std::size_t start = 0; start < order.size(); start += protocol.batch_size) {
        const std::size_t b = std::min(protocol.batch_size, order.size() - start);
        std::vector<std::size_t> idx(b);
        std::vector<bool> flip(b);
        std::vector<int> y(b);
        for (std::size_t i = 0; i < b; ++i) {
          idx[i] = train_idx[order[start + i]];
          flip[i] = epoch_rng.bernoulli(protocol.flip_p);
          y[i] = dataset.labels[idx[i]];
        }
        Tensor<Real> batch = detail::stack_batch(images, idx, flip);
        typename Backbone<Real>::Cache cache;
        Tensor<Real> pooled = backbone.forward_pooled(batch, BnMode::train, &cache);
        typename Linear<Real>::Cache hcache;
        Tensor<Real> logits = head.forward(pooled, &hcache);
        for (auto& p : params) p.grad->zero();
        Tensor<Real> dlogits = cross_entropy_backward(logits, y, Real(1));
        Tensor<Real> dpooled = head.backward(dlogits, hcache);
        backbone.backward_from_pooled(dpooled, cache);
        opt.step(params, lr);
      }
    }

    // test pass, eval mode, no flip
    std::size_t hits = 0;
    for (std::size_t start = 0; start < test_idx.size(); start += protocol.batch_size) {
      const std::size_t b = std::min(protocol.batch_size, test_idx.size() - start);
      std::vector<std::size_t> idx(test_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                   test_idx.begin() + static_cast<std::ptrdiff_t>(start + b));
      std::vector<bool> flip(b, false);
      std::vector<int> y(b);
      for (std::size_t i = 0; i < b; ++i) y[i] = dataset.labels[idx[i]];
      Tensor<Real> batch = detail::stack_batch(images, idx, flip);
      Tensor<Real> pooled = backbone.forward_pooled(batch, BnMode::eval, nullptr);
      Tensor<Real> logits = head.forward(pooled, nullptr);
      hits += static_cast<std::size_t>(
          std::llround(top1_accuracy(logits, y) * static_cast<double>(b)));
    }
    report.per_trial.push_back(static_cast<double>(hits) /
                               static_cast<double>(test_idx.size()));
  }
  report.finalize();
  report.protocol_echo = nlohmann::json{{"mode", "finetune"},
                                        {"train_fraction", protocol.train_fraction},
                                        {"trials", protocol.trials},
                                        {"epochs", protocol.epochs},
                                        {"resize", protocol.resize},
                                        {"seed", protocol.seed}};
  return report;
}

}  // namespace gersp
