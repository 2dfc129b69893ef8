/* Copyright 2026 The gradsim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gradsim/half.hpp"

// Emulated mixed-precision training: binary16 compute copies, a binary32
// master copy of the weights, loss scaling with overflow skipping, and
// binary32 accumulation for long reductions.

namespace gradsim::precision {

struct LossScalePolicy {
  enum class Kind : std::uint8_t { kConstant, kDynamic };

  Kind kind = Kind::kConstant;
  double growth = 2.0;
  double backoff = 0.5;
  std::size_t window = 2000;  // clean batches before the scale grows

  static LossScalePolicy constant() { return {}; }
  static LossScalePolicy dynamic(double growth = 2.0, double backoff = 0.5,
                                 std::size_t window = 2000) {
    return {Kind::kDynamic, growth, backoff, window};
  }
};

struct LossScaleState {
  double scale = 1.0;
  LossScalePolicy policy;
  std::uint64_t skipped_batches = 0;
  std::size_t clean_streak = 0;

  void validate() const;
  // Records the outcome of one batch. Overflow counts a skip and, for the
  // dynamic policy, backs the scale off and restarts the clean window.
  void record(bool overflow);
};

double scale_loss(double loss, const LossScaleState& state);
std::vector<double> unscale_gradients(std::span<const double> grads,
                                      const LossScaleState& state);

struct HalfGradients {
  std::vector<Half> values;
  bool overflow = false;  // some entry is inf or NaN
  std::size_t underflowed = 0;
};

// Rounds already-scaled gradients into binary16, the way a half backward
// pass would hand them over.
HalfGradients to_half_gradients(std::span<const double> scaled_grads);

// Entries of `grads * scale` that survive as nonzero binary16 values.
std::size_t representable_count(std::span<const double> grads, double scale);

struct MixedUpdateOptions {
  double eta = 0.01;
  double clip_norm = 0.0;     // 0 disables; applied after unscaling
  double weight_decay = 0.0;  // applied after unscaling
};

enum class UpdateOutcome : std::uint8_t { kApplied, kSkipped };

// Widens `grads` to binary32, unscales, then clips / decays, then applies
// w <- w - eta * g to the master copy. Non-finite gradients skip the batch
// and leave `master` untouched.
UpdateOutcome mixed_update(std::vector<float>& master, std::span<const Half> grads,
                           LossScaleState& state,
                           const MixedUpdateOptions& options);

// Compute copy regenerated from the master weights.
std::vector<Half> half_weights(std::span<const float> master);

// Reference for what the master copy avoids: every operation rounded to
// binary16.
std::vector<Half> pure_half_update(std::span<const Half> weights,
                                   std::span<const Half> grads, double eta);

struct SingleSum {
  float sum = 0.0f;  // binary32 accumulator
  HalfConversion half;  // written back at the boundary
};

SingleSum reduce_single_precision(std::span<const Half> values);
// Every partial sum rounded to binary16.
Half reduce_half_accumulator(std::span<const Half> values);

}  // namespace gradsim::precision
