// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gersp/augment/augment.hpp"
#include "gersp/core/errors.hpp"
#include "gersp/core/parallel.hpp"
#include "gersp/core/png_io.hpp"
#include "gersp/core/rng.hpp"
#include "gersp/core/tensor.hpp"
#include "gersp/data/dataset.hpp"
#include "gersp/data/sampler.hpp"
#include "gersp/data/synthetic.hpp"
#include "gersp/eval/eval.hpp"
#include "gersp/model/backbone.hpp"
#include "gersp/model/encoder.hpp"
#include "gersp/model/layers.hpp"
#include "gersp/objective/ema.hpp"
#include "gersp/objective/losses.hpp"
#include "gersp/objective/queue.hpp"
#include "gersp/schedule/schedule.hpp"
#include "gersp/schedule/sgd.hpp"
#include "gersp/trainer/checkpoint.hpp"
#include "gersp/trainer/config.hpp"
#include "gersp/trainer/trainer.hpp"
