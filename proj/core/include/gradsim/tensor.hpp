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
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace gradsim::tensor {

enum class Precision : std::uint8_t {
  kSingle = 0,  // carried as binary64 in memory and on the wire
  kHalf = 1,    // values are always binary16-representable
};

constexpr std::size_t element_bytes(Precision p) noexcept {
  return p == Precision::kHalf ? 2 : 8;
}

const char* to_string(Precision p) noexcept;

struct LayerSpan {
  std::size_t start = 0;
  std::size_t length = 0;

  friend bool operator==(const LayerSpan&, const LayerSpan&) = default;
};

// Flat gradient/weight vector. Half-tagged vectors round every value to
// binary16 on construction, so the tag is always truthful.
class GradientVector {
 public:
  GradientVector() = default;
  explicit GradientVector(std::vector<double> values,
                          Precision precision = Precision::kSingle);
  GradientVector(std::vector<double> values, Precision precision,
                 std::vector<LayerSpan> layers);

  static GradientVector zeros(std::size_t n,
                              Precision precision = Precision::kSingle);
  static GradientVector filled(std::size_t n, double value,
                               Precision precision = Precision::kSingle);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t byte_size() const noexcept {
    return size() * element_bytes(precision_);
  }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  Precision precision() const noexcept { return precision_; }

  const std::optional<std::vector<LayerSpan>>& layers() const noexcept {
    return layers_;
  }
  // Throws ShapeError unless the spans tile [0, size()) in order.
  void set_layers(std::vector<LayerSpan> layers);
  void clear_layers() noexcept { layers_.reset(); }

  // Copy of [begin, end); layer info is dropped.
  GradientVector slice(std::size_t begin, std::size_t end) const;
  // Overwrites [offset, offset + src.size()).
  void assign(std::size_t offset, std::span<const double> src);

  bool all_finite() const noexcept;
  // Re-rounds in place when half-tagged; no-op for single.
  void normalize() noexcept;

  // Bit-for-bit comparison including -0.0 vs 0.0 and NaN payloads.
  bool bit_equal(const GradientVector& other) const noexcept;

  friend bool operator==(const GradientVector& a, const GradientVector& b) {
    return a.precision_ == b.precision_ && a.values_ == b.values_;
  }

 private:
  std::vector<double> values_;
  Precision precision_ = Precision::kSingle;
  std::optional<std::vector<LayerSpan>> layers_;
};

// Boundaries of a balanced p-way split; the first (length % p) chunks get
// the extra element.
struct ChunkPlan {
  std::size_t p = 0;
  std::vector<std::size_t> boundaries;  // p + 1 entries

  std::size_t begin(std::size_t chunk) const { return boundaries[chunk]; }
  std::size_t end(std::size_t chunk) const { return boundaries[chunk + 1]; }
  std::size_t chunk_size(std::size_t chunk) const {
    return end(chunk) - begin(chunk);
  }
};

ChunkPlan chunk_partition(std::size_t length, std::size_t p);
ChunkPlan chunk_partition(const GradientVector& v, std::size_t p);

struct ReduceOp {
  enum class Kind : std::uint8_t { kSum, kAverage };
  Kind kind = Kind::kSum;
  std::size_t count = 1;  // divisor for kAverage

  static constexpr ReduceOp sum() noexcept { return {Kind::kSum, 1}; }
  static constexpr ReduceOp average(std::size_t n) noexcept {
    return {Kind::kAverage, n};
  }
};

// c[i] = a[i] + b[i], divided by op.count for averages.
GradientVector reduce_elementwise(const GradientVector& a,
                                  const GradientVector& b, ReduceOp op);

// dst += src, rounding through binary16 when `precision` is half.
void accumulate(std::span<double> dst, std::span<const double> src,
                Precision precision);

// Applies the once-at-the-end division of an averaging reduction.
void finalize(GradientVector& v, ReduceOp op);

GradientVector concat_chunks(std::span<const GradientVector> chunks);

// Sequential left-to-right sum; the oracle every collective is checked
// against.
GradientVector sequential_sum(std::span<const GradientVector> vectors);

inline constexpr std::size_t kDefaultFusionBytes = 64 * 1024;

struct FusedTensor {
  std::vector<int> layer_ids;
  GradientVector data;  // layers() records where each id's segment lives
};

// Packs small per-layer segments into one buffer of at least min_bytes.
class FusionBuffer {
 public:
  explicit FusionBuffer(std::size_t min_bytes = kDefaultFusionBytes)
      : min_bytes_(min_bytes) {}

  // Emits a fused tensor exactly when the pending bytes reach min_bytes.
  std::optional<FusedTensor> push(int layer_id, GradientVector segment);
  // End-of-step drain; nullopt when nothing is pending.
  std::optional<FusedTensor> flush();

  std::size_t min_bytes() const noexcept { return min_bytes_; }
  std::size_t pending_bytes() const noexcept { return pending_bytes_; }
  std::size_t pending_count() const noexcept { return pending_.size(); }

 private:
  FusedTensor drain();

  std::size_t min_bytes_;
  std::size_t pending_bytes_ = 0;
  std::vector<std::pair<int, GradientVector>> pending_;
};

// Inverse of fusion: per-layer segments in their original order.
std::vector<std::pair<int, GradientVector>> unfuse(const FusedTensor& fused);

// [u8 precision][u32 count][count x (f64 | u16 half bits)], little-endian.
void serialize_into(std::vector<std::uint8_t>& out, std::span<const double> values,
                    Precision precision);
std::vector<std::uint8_t> serialize(const GradientVector& v);
// Reads one vector starting at `offset`, advancing it.
GradientVector deserialize(std::span<const std::uint8_t> bytes,
                           std::size_t& offset);
GradientVector deserialize(std::span<const std::uint8_t> bytes);
std::size_t serialized_size(std::size_t count, Precision precision) noexcept;

}  // namespace gradsim::tensor
