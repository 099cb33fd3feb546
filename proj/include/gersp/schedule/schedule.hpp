// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "gersp/core/errors.hpp"

namespace gersp {

/// Cosine annealing with restarts over epochs:
///   lr = lr_min + (lr_max - lr_min)/2 * (1 + cos(pi * t_cur / t_max))
struct CosineRestartSchedule {
  double lr_min = 0.01;
  double lr_max = 0.10;
  std::size_t t_max = 20;

  void validate() const {
    if (!(lr_min >= 0 && lr_min <= lr_max))
      throw ConfigError("cosine schedule: need 0 <= lr_min <= lr_max");
    if (t_max < 1) throw ConfigError("cosine schedule: t_max must be >= 1");
  }
};

inline double cosine_restart_lr(std::size_t t_cur, const CosineRestartSchedule& sched) {
  sched.validate();
  if (t_cur > sched.t_max)
    throw ConfigError("cosine schedule: t_cur out of range");
  // anchor points where the cosine takes exact values
  if (t_cur == 0) return sched.lr_max;
  if (t_cur == sched.t_max) return sched.lr_min;
  if (2 * t_cur == sched.t_max) return 0.5 * (sched.lr_min + sched.lr_max);
  return sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) *
                            (1.0 + std::cos(3.14159265358979323846 *
                                            static_cast<double>(t_cur) /
                                            static_cast<double>(sched.t_max)));
}

/// Continuous-time variant used when the learning rate is interpolated per
/// iteration instead of held per epoch.
inline double cosine_restart_lr_at(double t, const CosineRestartSchedule& sched) {
  sched.validate();
  const double t_cur = std::fmod(t, static_cast<double>(sched.t_max));
  return sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) *
                            (1.0 + std::cos(3.14159265358979323846 * t_cur /
                                            static_cast<double>(sched.t_max)));
}

/// Step decay: base_lr * gamma^(milestones passed).
struct StepSchedule {
  double base_lr = 0.01;
  std::vector<std::size_t> milestones = {30, 60, 90};
  double gamma = 0.1;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw ConfigError("step schedule: gamma must be in (0,1)");
    for (std::size_t i = 1; i < milestones.size(); ++i)
      if (milestones[i] <= milestones[i - 1])
        throw ConfigError("step schedule: milestones must be strictly increasing");
    if (base_lr <= 0) throw ConfigError("step schedule: base_lr must be > 0");
  }
};

inline double step_lr(std::size_t epoch, const StepSchedule& sched) {
  sched.validate();
  std::size_t passed = 0;
  for (std::size_t m : sched.milestones)
    if (m <= epoch) ++passed;
  return sched.base_lr * std::pow(sched.gamma, static_cast<double>(passed));
}

}  // namespace gersp
