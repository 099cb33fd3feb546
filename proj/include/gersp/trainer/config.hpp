// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>

#include "gersp/augment/augment.hpp"
#include "gersp/data/dataset.hpp"
#include "gersp/model/backbone.hpp"
#include "gersp/schedule/schedule.hpp"

namespace gersp {

/// How teacher batch-norm running statistics follow the student.
enum class TeacherBnStats { copy, ema };

/// Every knob of the pre-training run, serializable as flat-ish JSON.
struct TrainingConfig {
  EncoderSpec encoder;
  AugmentationPolicy augment;
  ChannelStats normalize;
  double alpha = 1.0;
  double tau = 0.07;
  double ema_m = 0.996;
  std::size_t queue_capacity = 65536;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  CosineRestartSchedule cosine;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  bool decay_bn_and_bias = true;
  TeacherBnStats teacher_bn_stats = TeacherBnStats::copy;
  bool per_iteration_lr = false;
  std::uint64_t seed = 0;

  void validate() const {
    encoder.validate();
    augment.validate();
    cosine.validate();
    if (!(alpha >= 0)) throw ConfigError("config: alpha must be >= 0");
    if (!(tau > 0)) throw ConfigError("config: tau must be > 0");
    if (!(ema_m >= 0 && ema_m <= 1)) throw ConfigError("config: ema_m must be in [0,1]");
    if (queue_capacity == 0) throw ConfigError("config: queue_capacity must be > 0");
    if (batch_size == 0) throw ConfigError("config: batch_size must be > 0");
    if (batch_size % encoder.bn_groups != 0)
      throw ConfigError("config: batch_size must be divisible by encoder.bn_groups");
  }

  static TrainingConfig desk(int n_classes) {
    TrainingConfig c;
    c.encoder = EncoderSpec::desk(n_classes);
    c.augment.out_size = c.encoder.input_size;
    c.queue_capacity = 1024;
    c.batch_size = 32;
    c.epochs = 15;
    return c;
  }

  static TrainingConfig full(int n_classes = 1000) {
    TrainingConfig c;
    c.encoder = EncoderSpec::full(n_classes);
    c.augment.out_size = c.encoder.input_size;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const EncoderSpec& s) {
  j = nlohmann::json{
      {"stage_widths", s.stage_widths},
      {"blocks_per_stage", s.blocks_per_stage},
      {"block", s.block == BlockKind::bottleneck ? "bottleneck" : "basic"},
      {"stem", s.stem == StemKind::conv7_pool ? "conv7_pool" : "conv3"},
      {"stem_stride", s.stem_stride},
      {"input_size", s.input_size},
      {"proj_hidden_dim", s.proj_hidden_dim},
      {"proj_out_dim", s.proj_out_dim},
      {"n_classes", s.n_classes},
      {"bn_groups", s.bn_groups},
      {"bn_momentum", s.bn_momentum},
      {"bn_eps", s.bn_eps},
  };
}

inline void from_json(const nlohmann::json& j, EncoderSpec& s) {
  s.stage_widths = j.value("stage_widths", s.stage_widths);
  s.blocks_per_stage = j.value("blocks_per_stage", s.blocks_per_stage);
  const std::string block = j.value("block", std::string("basic"));
  if (block != "basic" && block != "bottleneck")
    throw ConfigError("encoder spec: unknown block kind '" + block + "'");
  s.block = block == "bottleneck" ? BlockKind::bottleneck : BlockKind::basic;
  const std::string stem = j.value("stem", std::string("conv3"));
  if (stem != "conv3" && stem != "conv7_pool")
    throw ConfigError("encoder spec: unknown stem kind '" + stem + "'");
  s.stem = stem == "conv7_pool" ? StemKind::conv7_pool : StemKind::conv3;
  s.stem_stride = j.value("stem_stride", s.stem_stride);
  s.input_size = j.value("input_size", s.input_size);
  s.proj_hidden_dim = j.value("proj_hidden_dim", s.proj_hidden_dim);
  s.proj_out_dim = j.value("proj_out_dim", s.proj_out_dim);
  s.n_classes = j.value("n_classes", s.n_classes);
  s.bn_groups = j.value("bn_groups", s.bn_groups);
  s.bn_momentum = j.value("bn_momentum", s.bn_momentum);
  s.bn_eps = j.value("bn_eps", s.bn_eps);
}

inline void to_json(nlohmann::json& j, const AugmentationPolicy& p) {
  j = nlohmann::json{
      {"crop_ratio_min", p.crop_ratio_min},
      {"crop_ratio_max", p.crop_ratio_max},
      {"aspect_min", p.aspect_min},
      {"aspect_max", p.aspect_max},
      {"out_size", p.out_size},
      {"p_color_jitter", p.p_color_jitter},
      {"jitter_brightness", p.jitter_brightness},
      {"jitter_contrast", p.jitter_contrast},
      {"jitter_saturation", p.jitter_saturation},
      {"jitter_hue", p.jitter_hue},
      {"p_grayscale", p.p_grayscale},
      {"p_hflip", p.p_hflip},
      {"p_blur", p.p_blur},
      {"blur_sigma_min", p.blur_sigma_min},
      {"blur_sigma_max", p.blur_sigma_max},
  };
}

inline void from_json(const nlohmann::json& j, AugmentationPolicy& p) {
  p.crop_ratio_min = j.value("crop_ratio_min", p.crop_ratio_min);
  p.crop_ratio_max = j.value("crop_ratio_max", p.crop_ratio_max);
  p.aspect_min = j.value("aspect_min", p.aspect_min);
  p.aspect_max = j.value("aspect_max", p.aspect_max);
  p.out_size = j.value("out_size", p.out_size);
  p.p_color_jitter = j.value("p_color_jitter", p.p_color_jitter);
  p.jitter_brightness = j.value("jitter_brightness", p.jitter_brightness);
  p.jitter_contrast = j.value("jitter_contrast", p.jitter_contrast);
  p.jitter_saturation = j.value("jitter_saturation", p.jitter_saturation);
  p.jitter_hue = j.value("jitter_hue", p.jitter_hue);
  p.p_grayscale = j.value("p_grayscale", p.p_grayscale);
  p.p_hflip = j.value("p_hflip", p.p_hflip);
  p.p_blur = j.value("p_blur", p.p_blur);
  p.blur_sigma_min = j.value("blur_sigma_min", p.blur_sigma_min);
  p.blur_sigma_max = j.value("blur_sigma_max", p.blur_sigma_max);
}

inline void to_json(nlohmann::json& j, const ChannelStats& s) {
  j = nlohmann::json{{"mean", s.mean}, {"std", s.std}};
}

inline void from_json(const nlohmann::json& j, ChannelStats& s) {
  s.mean = j.value("mean", s.mean);
  s.std = j.value("std", s.std);
}

inline void to_json(nlohmann::json& j, const CosineRestartSchedule& s) {
  j = nlohmann::json{{"lr_min", s.lr_min}, {"lr_max", s.lr_max}, {"t_max", s.t_max}};
}

inline void from_json(const nlohmann::json& j, CosineRestartSchedule& s) {
  s.lr_min = j.value("lr_min", s.lr_min);
  s.lr_max = j.value("lr_max", s.lr_max);
  s.t_max = j.value("t_max", s.t_max);
}

inline void to_json(nlohmann::json& j, const StepSchedule& s) {
  j = nlohmann::json{{"base_lr", s.base_lr}, {"milestones", s.milestones}, {"gamma", s.gamma}};
}

inline void from_json(const nlohmann::json& j, StepSchedule& s) {
  s.base_lr = j.value("base_lr", s.base_lr);
  s.milestones = j.value("milestones", s.milestones);
  s.gamma = j.value("gamma", s.gamma);
}

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{
      {"encoder", c.encoder},
      {"augment", c.augment},
      {"normalize", c.normalize},
      {"alpha", c.alpha},
      {"tau", c.tau},
      {"ema_m", c.ema_m},
      {"queue_capacity", c.queue_capacity},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"cosine", c.cosine},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"decay_bn_and_bias", c.decay_bn_and_bias},
      {"teacher_bn_stats", c.teacher_bn_stats == TeacherBnStats::ema ? "ema" : "copy"},
      {"per_iteration_lr", c.per_iteration_lr},
      {"seed", c.seed},
  };
}

inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("augment")) j.at("augment").get_to(c.augment);
  if (j.contains("normalize")) j.at("normalize").get_to(c.normalize);
  c.alpha = j.value("alpha", c.alpha);
  c.tau = j.value("tau", c.tau);
  c.ema_m = j.value("ema_m", c.ema_m);
  c.queue_capacity = j.value("queue_capacity", c.queue_capacity);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  if (j.contains("cosine")) j.at("cosine").get_to(c.cosine);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.decay_bn_and_bias = j.value("decay_bn_and_bias", c.decay_bn_and_bias);
  const std::string tbs = j.value("teacher_bn_stats", std::string("copy"));
  if (tbs != "copy" && tbs != "ema")
    throw ConfigError("config: unknown teacher_bn_stats '" + tbs + "'");
  c.teacher_bn_stats = tbs == "ema" ? TeacherBnStats::ema : TeacherBnStats::copy;
  c.per_iteration_lr = j.value("per_iteration_lr", c.per_iteration_lr);
  c.seed = j.value("seed", c.seed);
}

}  // namespace gersp
