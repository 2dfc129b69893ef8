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

#include "gradsim/tensor.hpp"

namespace gradsim::compress {

struct SparseGradient {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;
  std::size_t dense_length = 0;

  std::size_t count() const noexcept { return indices.size(); }
  std::size_t encoding_bytes() const noexcept;
  // Throws InvalidArgument unless indices are sorted, unique, in range.
  void validate() const;
  std::vector<double> to_dense() const;

  friend bool operator==(const SparseGradient&, const SparseGradient&) = default;
};

// Wire: u32 magic, u32 dense_length, u32 count, count x u32 index,
// count x f64 value; all little-endian.
inline constexpr std::uint32_t kSparseMagic = 0x31505347;  // "GSP1"
inline constexpr std::size_t kSparseHeaderBytes = 12;

std::size_t sparse_encoded_size(std::size_t count) noexcept;
std::vector<std::uint8_t> sparse_encode(const SparseGradient& g);
SparseGradient sparse_decode(std::span<const std::uint8_t> bytes);

double compression_ratio(std::size_t dense_bytes, std::size_t encoded_bytes);

// Sum of sparse gradients over the union of their supports, accumulated in
// the given order.
std::vector<double> sparse_sum(std::span<const SparseGradient> parts);

// Entries kept when a fraction s of `length` is dropped: ceil((1 - s) * length),
// at least one.
std::size_t keep_count(std::size_t length, double sparsity);

// Indices of the `keep` largest magnitudes, ties to the lower index, returned
// in increasing order.
std::vector<std::uint32_t> top_magnitude(std::span<const double> v, std::size_t keep);

// Scales G onto the ball of radius `threshold` when it lies outside.
std::vector<double> local_gradient_clip(std::span<const double> g, double threshold);

// Sparsity for `epoch` under a geometric ramp from `start` to `final_s` over
// `epochs` epochs: s_e = 1 - (1 - start) * q^e, q fixed by the endpoints.
double warmup_sparsity(double start, double final_s, std::size_t epochs,
                       double epoch);

struct DgcConfig {
  double momentum = 0.9;
  double sparsity = 0.999;  // final
  bool clipping = false;
  double clip_threshold = 1.0;
  // Zero the velocity at transmitted positions along with the accumulator.
  bool mask_momentum = true;
  bool warmup = true;
  double warmup_start = 0.75;
  std::size_t warmup_epochs = 4;

  void validate() const;
  double sparsity_at(double epoch) const;
};

class DgcState {
 public:
  DgcState(std::size_t length, DgcConfig config);

  // One worker step: optional clipping, U <- mU + G, V <- V + U, then per
  // layer keep the largest |V| entries, transmit them and clear them from V
  // (and from U when masking is on). `layers` empty means one layer.
  SparseGradient step(std::span<const double> g,
                      std::span<const tensor::LayerSpan> layers, double sparsity);

  const std::vector<double>& velocity() const noexcept { return u_; }
  const std::vector<double>& accumulator() const noexcept { return v_; }
  const DgcConfig& config() const noexcept { return config_; }

 private:
  DgcConfig config_;
  std::vector<double> u_;
  std::vector<double> v_;
};

struct DropResult {
  SparseGradient sent;
  std::vector<double> residual;
};

// Adds `residual` to G, transmits the top (100 - R)% by magnitude and keeps
// the rest as the next residual.
DropResult gradient_drop(std::span<const double> g, std::span<const double> residual,
                         double drop_percent);

struct OneBitGradient {
  std::size_t length = 0;
  std::vector<std::uint8_t> signs;  // bit i set: entry i is non-negative
  float positive_scale = 0.0f;       // mean of the non-negative entries
  float negative_scale = 0.0f;       // mean magnitude of the negative entries

  bool sign_bit(std::size_t i) const { return (signs[i / 8] >> (i % 8)) & 1u; }
  std::vector<double> dequantize() const;
  std::size_t encoding_bytes() const noexcept;
};

struct OneBitResult {
  OneBitGradient quantized;
  std::vector<double> error;
};

// q = sign(G + error); magnitudes restored by per-sign means; the new error
// is (G + error) - dequantize(q).
OneBitResult onebit_quantize(std::span<const double> g, std::span<const double> error);

std::vector<std::uint8_t> onebit_encode(const OneBitGradient& q);
OneBitGradient onebit_decode(std::span<const std::uint8_t> bytes);

struct TernaryGradient {
  std::vector<std::int8_t> levels;  // -1, 0, +1
  std::vector<tensor::LayerSpan> layers;
  std::vector<double> scalers;      // one per layer

  std::vector<double> dequantize() const;
};

// Per layer: clip entries to +-clip * stddev (skipped when stddev is 0),
// scaler = max |entry|, entry -> sign with probability |entry| / scaler.
// Random draws are indexed (seed, draw_base + i).
TernaryGradient ternary_quantize(std::span<const double> g,
                                 std::span<const tensor::LayerSpan> layers,
                                 double clip, std::uint64_t seed,
                                 std::uint64_t draw_base = 0);

}  // namespace gradsim::compress
