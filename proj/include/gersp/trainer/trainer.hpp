// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gersp/data/sampler.hpp"
#include "gersp/model/encoder.hpp"
#include "gersp/objective/ema.hpp"
#include "gersp/objective/losses.hpp"
#include "gersp/objective/queue.hpp"
#include "gersp/schedule/schedule.hpp"
#include "gersp/schedule/sgd.hpp"
#include "gersp/trainer/checkpoint.hpp"
#include "gersp/trainer/config.hpp"

namespace gersp {

template <typename Real>
struct MetricRecord {
  std::uint64_t iteration = 0;
  std::size_t epoch = 0;
  double lr = 0;
  LossBreakdown<Real> loss;
};

template <typename Real>
struct TrainState {
  TrainingConfig config;
  EncoderBundle<Real> bundle;
  NegativeQueue<Real> queue;
  OptimizerState<Real> optimizer;
  std::size_t epoch = 0;
  std::uint64_t iteration = 0;
  RngStream shuffle_rng;  // shuffling-BN permutations, one fork per step
  std::vector<MetricRecord<Real>> history;
};

template <typename Real>
TrainState<Real> init_train_state(const TrainingConfig& config) {
  config.validate();
  TrainState<Real> st;
  st.config = config;
  st.bundle = init_encoder<Real>(config.encoder, config.seed);
  st.queue = NegativeQueue<Real>(config.queue_capacity, config.encoder.proj_out_dim);
  st.optimizer = OptimizerState<Real>(static_cast<Real>(config.momentum),
                                      static_cast<Real>(config.weight_decay),
                                      config.decay_bn_and_bias);
  st.shuffle_rng = RngStream(config.seed).fork("shuffle_bn");
  return st;
}

/// One joint optimization iteration: contrastive branch (student query vs
/// shuffled-teacher key against the queue), supervised branch (student
/// classification), combined backward, SGD step, EMA update, queue push.
template <typename Real>
LossBreakdown<Real> train_step(TrainState<Real>& state, const DualBatch<Real>& batch,
                               double lr) {
  auto& bundle = state.bundle;
  const Real tau = static_cast<Real>(state.config.tau);
  const Real alpha = static_cast<Real>(state.config.alpha);

  // (1) student query features
  typename Backbone<Real>::Cache bb_cache_q;
  Tensor<Real> pooled_q =
      bundle.student_backbone.forward_pooled(batch.rs_view_q, BnMode::train, &bb_cache_q);
  typename Projector<Real>::Cache proj_cache;
  Tensor<Real> z_q = bundle.student_projector.forward(pooled_q, &proj_cache);

  // (2) teacher key features; no gradient state anywhere on this path
  RngStream step_rng = state.shuffle_rng.fork(0x53485546ULL, state.iteration);
  Tensor<Real> pooled_k =
      shuffled_forward(bundle.teacher_backbone, batch.rs_view_k,
                       state.config.encoder.bn_groups, step_rng, BnMode::group_stats);
  Tensor<Real> z_k = bundle.teacher_projector.forward(pooled_k, nullptr);

  // (3) student classification on the natural sub-batch
  typename Backbone<Real>::Cache bb_cache_n;
  Tensor<Real> pooled_n = bundle.student_backbone.forward_pooled(
      batch.natural_images, BnMode::train, &bb_cache_n);
  typename Linear<Real>::Cache pred_cache;
  Tensor<Real> logits = bundle.student_predictor.forward(pooled_n, &pred_cache);

  // (4) losses
  const Real l_ct = info_nce(z_q, z_k, state.queue, tau);
  const Real l_ce = cross_entropy(logits, batch.natural_labels);
  const LossBreakdown<Real> breakdown = total_loss(l_ct, l_ce, alpha);
  if (!std::isfinite(static_cast<double>(breakdown.l_total))) {
    std::ostringstream os;
    os << "non-finite loss at iteration " << state.iteration << " (l_ct=" << breakdown.l_ct
       << ", l_ce=" << breakdown.l_ce << ", l_total=" << breakdown.l_total << ")";
    throw NumericError(os.str());
  }

  // (5) backward through the student only
  bundle.zero_grads();
  Tensor<Real> dz_q = info_nce_backward(z_q, z_k, state.queue, tau, Real(1));
  Tensor<Real> dpooled_q = bundle.student_projector.backward(dz_q, proj_cache);
  bundle.student_backbone.backward_from_pooled(dpooled_q, bb_cache_q);

  Tensor<Real> dlogits = cross_entropy_backward(logits, batch.natural_labels, alpha);
  Tensor<Real> dpooled_n = bundle.student_predictor.backward(dlogits, pred_cache);
  bundle.student_backbone.backward_from_pooled(dpooled_n, bb_cache_n);

  // (6) optimizer step
  state.optimizer.step(bundle.student_params(), static_cast<Real>(lr));

  // (7) teacher momentum update
  ema_update(bundle.teacher_params(), bundle.student_ema_params(),
             static_cast<Real>(state.config.ema_m));
  if (state.config.teacher_bn_stats == TeacherBnStats::copy)
    copy_state(bundle.teacher_state(), bundle.student_state());
  else
    ema_state(bundle.teacher_state(), bundle.student_state(),
              static_cast<Real>(state.config.ema_m));

  // (8) enqueue keys
  state.queue.push(z_k);

  ++state.iteration;
  return breakdown;
}

template <typename Real>
void append_metric(std::ofstream* metrics_out, const MetricRecord<Real>& rec) {
  if (!metrics_out || !metrics_out->is_open()) return;
  nlohmann::json j{{"iteration", rec.iteration}, {"epoch", rec.epoch},
                   {"lr", rec.lr},               {"l_ct", static_cast<double>(rec.loss.l_ct)},
                   {"l_ce", static_cast<double>(rec.loss.l_ce)},
                   {"l_total", static_cast<double>(rec.loss.l_total)}};
  *metrics_out << j.dump() << "\n";
}

/// Full pre-training run: cosine-restart LR per epoch, floor(|rs|/B) steps per
/// epoch, metrics log, final checkpoint of the student.
template <typename Real>
Checkpoint pretrain(const TrainingConfig& config, const LabeledDataset& labeled,
                    const UnlabeledDataset& unlabeled, const std::string& out_path,
                    const std::string& metrics_path = "") {
  config.validate();
  labeled.validate();
  unlabeled.validate();
  if (config.encoder.n_classes != labeled.n_classes())
    throw ConfigError("pretrain: encoder n_classes (" +
                      std::to_string(config.encoder.n_classes) +
                      ") does not match dataset (" +
                      std::to_string(labeled.n_classes()) + ")");

  const auto t_start = std::chrono::steady_clock::now();
  TrainState<Real> state = init_train_state<Real>(config);
  DualBatchSampler<Real> sampler(config.seed, labeled.size(), unlabeled.size());

  std::ofstream metrics_out;
  if (!metrics_path.empty()) {
    metrics_out.open(metrics_path, std::ios::trunc);
    if (!metrics_out) throw IoError("cannot open metrics log: " + metrics_path);
  }

  const std::size_t steps_per_epoch =
      std::max<std::size_t>(1, unlabeled.size() / config.batch_size);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    const double epoch_lr = cosine_restart_lr(epoch % config.cosine.t_max, config.cosine);
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const double lr =
          config.per_iteration_lr
              ? cosine_restart_lr_at(static_cast<double>(epoch) +
                                         static_cast<double>(step) /
                                             static_cast<double>(steps_per_epoch),
                                     config.cosine)
              : epoch_lr;
      DualBatch<Real> batch = sampler.next(labeled, unlabeled, config.augment,
                                           config.normalize, config.batch_size);
      MetricRecord<Real> rec;
      rec.iteration = state.iteration;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.loss = train_step(state, batch, lr);
      state.history.push_back(rec);
      append_metric(&metrics_out, rec);
    }
  }

  // Wall time stays out of the serialized metadata: checkpoints from equal
  // seeds must be byte-identical, CRC included.
  nlohmann::json metadata;
  metadata["epochs_completed"] = config.epochs;
  metadata["iterations"] = state.iteration;
  metadata["steps_per_epoch"] = steps_per_epoch;
  if (!state.history.empty()) {
    const auto& last = state.history.back().loss;
    metadata["final_l_ct"] = static_cast<double>(last.l_ct);
    metadata["final_l_ce"] = static_cast<double>(last.l_ce);
    metadata["final_l_total"] = static_cast<double>(last.l_total);
  }
  Checkpoint ckpt = save_checkpoint(state.bundle, config, metadata, out_path);
  ckpt.metadata["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return ckpt;
}

}  // namespace gersp
