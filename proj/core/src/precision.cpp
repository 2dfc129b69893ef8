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

#include "gradsim/precision.hpp"

#include <cmath>

#include "gradsim/error.hpp"

namespace gradsim::precision {

void LossScaleState::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("loss scale must be positive and finite");
  }
  if (policy.kind == LossScalePolicy::Kind::kDynamic) {
    if (!(policy.growth > 1.0)) throw InvalidArgument("loss scale growth must exceed 1");
    if (!(policy.backoff > 0.0 && policy.backoff < 1.0)) {
      throw InvalidArgument("loss scale backoff must lie in (0, 1)");
    }
    if (policy.window == 0) throw InvalidArgument("loss scale window must be >= 1");
  }
}

void LossScaleState::record(bool overflow) {
  if (overflow) {
    ++skipped_batches;
    clean_streak = 0;
    if (policy.kind == LossScalePolicy::Kind::kDynamic) scale *= policy.backoff;
    return;
  }
  if (policy.kind != LossScalePolicy::Kind::kDynamic) return;
  if (++clean_streak >= policy.window) {
    scale *= policy.growth;
    clean_streak = 0;
  }
}

double scale_loss(double loss, const LossScaleState& state) {
  state.validate();
  return loss * state.scale;
}

std::vector<double> unscale_gradients(std::span<const double> grads,
                                      const LossScaleState& state) {
  state.validate();
  std::vector<double> out(grads.begin(), grads.end());
  for (auto& g : out) g /= state.scale;
  return out;
}

HalfGradients to_half_gradients(std::span<const double> scaled_grads) {
  HalfGradients out;
  out.values.reserve(scaled_grads.size());
  for (double g : scaled_grads) {
    const HalfConversion c = to_half(g);
    out.values.push_back(c.value);
    out.overflow = out.overflow || !is_finite(c.value);
    out.underflowed += c.underflow;
  }
  return out;
}

std::size_t representable_count(std::span<const double> grads, double scale) {
  std::size_t n = 0;
  for (double g : grads) {
    const HalfConversion c = to_half(g * scale);
    n += is_finite(c.value) && (c.value.bits & 0x7FFFu) != 0;
  }
  return n;
}

UpdateOutcome mixed_update(std::vector<float>& master, std::span<const Half> grads,
                           LossScaleState& state,
                           const MixedUpdateOptions& options) {
  state.validate();
  if (grads.size() != master.size()) throw ShapeError("gradient/weight length mismatch");
  bool overflow = false;
  for (Half h : grads) overflow = overflow || !is_finite(h);
  if (overflow) {
    state.record(true);
    return UpdateOutcome::kSkipped;
  }
  const float inv = static_cast<float>(1.0 / state.scale);
  std::vector<float> g(grads.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = static_cast<float>(from_half(grads[i])) * inv;
  }
  if (options.clip_norm > 0.0) {
    double sq = 0.0;
    for (float v : g) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (norm > options.clip_norm) {
      const auto f = static_cast<float>(options.clip_norm / norm);
      for (auto& v : g) v *= f;
    }
  }
  if (options.weight_decay != 0.0) {
    const auto wd = static_cast<float>(options.weight_decay);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += wd * master[i];
  }
  const auto eta = static_cast<float>(options.eta);
  for (std::size_t i = 0; i < g.size(); ++i) master[i] -= eta * g[i];
  state.record(false);
  return UpdateOutcome::kApplied;
}

std::vector<Half> half_weights(std::span<const float> master) {
  std::vector<Half> out;
  out.reserve(master.size());
  for (float w : master) out.push_back(to_half(w).value);
  return out;
}

std::vector<Half> pure_half_update(std::span<const Half> weights,
                                   std::span<const Half> grads, double eta) {
  if (weights.size() != grads.size()) throw ShapeError("gradient/weight length mismatch");
  const double eta_h = round_to_half(eta);
  std::vector<Half> out;
  out.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double step = round_to_half(eta_h * from_half(grads[i]));
    out.push_back(to_half(from_half(weights[i]) - step).value);
  }
  return out;
}

SingleSum reduce_single_precision(std::span<const Half> values) {
  SingleSum out;
  for (Half h : values) out.sum += static_cast<float>(from_half(h));
  out.half = to_half(out.sum);
  return out;
}

Half reduce_half_accumulator(std::span<const Half> values) {
  double acc = 0.0;
  for (Half h : values) acc = round_to_half(acc + from_half(h));
  return to_half(acc).value;
}

}  // namespace gradsim::precision
