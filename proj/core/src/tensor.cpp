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

#include "gradsim/tensor.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "gradsim/error.hpp"
#include "gradsim/half.hpp"
#include "gradsim/wire.hpp"

namespace gradsim::tensor {

const char* to_string(Precision p) noexcept {
  return p == Precision::kHalf ? "half" : "single";
}

GradientVector::GradientVector(std::vector<double> values, Precision precision)
    : values_(std::move(values)), precision_(precision) {
  normalize();
}

GradientVector::GradientVector(std::vector<double> values, Precision precision,
                               std::vector<LayerSpan> layers)
    : GradientVector(std::move(values), precision) {
  set_layers(std::move(layers));
}

GradientVector GradientVector::zeros(std::size_t n, Precision precision) {
  return GradientVector(std::vector<double>(n, 0.0), precision);
}

GradientVector GradientVector::filled(std::size_t n, double value,
                                      Precision precision) {
  return GradientVector(std::vector<double>(n, value), precision);
}

void GradientVector::set_layers(std::vector<LayerSpan> layers) {
  std::size_t cursor = 0;
  for (const auto& span : layers) {
    if (span.start != cursor || span.length == 0) {
      throw ShapeError("layer offsets must tile the vector without gaps");
    }
    cursor += span.length;
  }
  if (cursor != values_.size()) {
    throw ShapeError("layer offsets cover " + std::to_string(cursor) +
                     " of " + std::to_string(values_.size()) + " elements");
  }
  layers_ = std::move(layers);
}

GradientVector GradientVector::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > values_.size()) {
    throw ShapeError("slice out of range");
  }
  GradientVector out;
  out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(begin),
                     values_.begin() + static_cast<std::ptrdiff_t>(end));
  out.precision_ = precision_;
  return out;
}

void GradientVector::assign(std::size_t offset, std::span<const double> src) {
  if (offset + src.size() > values_.size()) {
    throw ShapeError("assign out of range");
  }
  for (std::size_t i = 0; i < src.size(); ++i) values_[offset + i] = src[i];
  normalize();
}

bool GradientVector::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void GradientVector::normalize() noexcept {
  if (precision_ != Precision::kHalf) return;
  for (double& v : values_) v = precision::round_to_half(v);
}

bool GradientVector::bit_equal(const GradientVector& other) const noexcept {
  if (precision_ != other.precision_ || values_.size() != other.values_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(values_[i]) !=
        std::bit_cast<std::uint64_t>(other.values_[i])) {
      return false;
    }
  }
  return true;
}

ChunkPlan chunk_partition(std::size_t length, std::size_t p) {
  if (p == 0) throw InvalidArgument("chunk_partition: p must be >= 1");
  ChunkPlan plan;
  plan.p = p;
  plan.boundaries.reserve(p + 1);
  const std::size_t base = length / p;
  const std::size_t extra = length % p;
  std::size_t at = 0;
  plan.boundaries.push_back(0);
  for (std::size_t i = 0; i < p; ++i) {
    at += base + (i < extra ? 1 : 0);
    plan.boundaries.push_back(at);
  }
  return plan;
}

ChunkPlan chunk_partition(const GradientVector& v, std::size_t p) {
  if (v.empty()) throw InvalidArgument("chunk_partition: empty vector");
  return chunk_partition(v.size(), p);
}

void accumulate(std::span<double> dst, std::span<const double> src,
                Precision precision) {
  if (dst.size() != src.size()) {
    throw ShapeError("accumulate: length " + std::to_string(dst.size()) +
                     " vs " + std::to_string(src.size()));
  }
  if (precision == Precision::kHalf) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = precision::round_to_half(dst[i] + src[i]);
    }
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void finalize(GradientVector& v, ReduceOp op) {
  if (op.kind != ReduceOp::Kind::kAverage) return;
  if (op.count == 0) throw InvalidArgument("average over zero workers");
  const double n = static_cast<double>(op.count);
  for (double& x : v.values()) x /= n;
  v.normalize();
}

GradientVector reduce_elementwise(const GradientVector& a,
                                  const GradientVector& b, ReduceOp op) {
  if (a.size() != b.size()) {
    throw ShapeError("reduce_elementwise: length " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  if (a.precision() != b.precision()) {
    throw ShapeError("reduce_elementwise: precision mismatch");
  }
  GradientVector c = a;
  c.clear_layers();
  accumulate(c.values(), b.values(), a.precision());
  finalize(c, op);
  return c;
}

GradientVector concat_chunks(std::span<const GradientVector> chunks) {
  if (chunks.empty()) throw InvalidArgument("concat_chunks: no chunks");
  const Precision precision = chunks.front().precision();
  std::size_t total = 0;
  for (const auto& c : chunks) {
    if (c.precision() != precision) {
      throw ShapeError("concat_chunks: precision mismatch");
    }
    total += c.size();
  }
  std::vector<double> values;
  values.reserve(total);
  for (const auto& c : chunks) {
    values.insert(values.end(), c.values().begin(), c.values().end());
  }
  return GradientVector(std::move(values), precision);
}

GradientVector sequential_sum(std::span<const GradientVector> vectors) {
  if (vectors.empty()) throw InvalidArgument("sequential_sum: no vectors");
  GradientVector acc = vectors.front();
  acc.clear_layers();
  for (std::size_t k = 1; k < vectors.size(); ++k) {
    if (vectors[k].precision() != acc.precision()) {
      throw ShapeError("sequential_sum: precision mismatch");
    }
    accumulate(acc.values(), vectors[k].values(), acc.precision());
  }
  return acc;
}

std::optional<FusedTensor> FusionBuffer::push(int layer_id,
                                              GradientVector segment) {
  if (segment.empty()) throw InvalidArgument("fusion: empty segment");
  if (!pending_.empty() &&
      pending_.front().second.precision() != segment.precision()) {
    throw ShapeError("fusion: precision mismatch");
  }
  pending_bytes_ += segment.byte_size();
  pending_.emplace_back(layer_id, std::move(segment));
  if (pending_bytes_ >= min_bytes_) return drain();
  return std::nullopt;
}

std::optional<FusedTensor> FusionBuffer::flush() {
  if (pending_.empty()) return std::nullopt;
  return drain();
}

FusedTensor FusionBuffer::drain() {
  FusedTensor out;
  std::vector<double> values;
  values.reserve(pending_bytes_ /
                 element_bytes(pending_.front().second.precision()));
  std::vector<LayerSpan> spans;
  const Precision precision = pending_.front().second.precision();
  for (auto& [id, seg] : pending_) {
    spans.push_back({values.size(), seg.size()});
    values.insert(values.end(), seg.values().begin(), seg.values().end());
    out.layer_ids.push_back(id);
  }
  out.data = GradientVector(std::move(values), precision, std::move(spans));
  pending_.clear();
  pending_bytes_ = 0;
  return out;
}

std::vector<std::pair<int, GradientVector>> unfuse(const FusedTensor& fused) {
  const auto& layers = fused.data.layers();
  if (!layers || layers->size() != fused.layer_ids.size()) {
    throw ShapeError("unfuse: fused tensor lacks layer offsets");
  }
  std::vector<std::pair<int, GradientVector>> out;
  out.reserve(layers->size());
  for (std::size_t k = 0; k < layers->size(); ++k) {
    const auto& s = (*layers)[k];
    out.emplace_back(fused.layer_ids[k], fused.data.slice(s.start, s.start + s.length));
  }
  return out;
}

std::size_t serialized_size(std::size_t count, Precision precision) noexcept {
  return 5 + count * element_bytes(precision);
}

void serialize_into(std::vector<std::uint8_t>& out,
                    std::span<const double> values, Precision precision) {
  wire::Writer w(std::move(out));
  w.u8(static_cast<std::uint8_t>(precision));
  w.u32(static_cast<std::uint32_t>(values.size()));
  if (precision == Precision::kHalf) {
    for (double v : values) w.u16(precision::to_half(v).value.bits);
  } else {
    for (double v : values) w.f64(v);
  }
  out = w.take();
}

std::vector<std::uint8_t> serialize(const GradientVector& v) {
  std::vector<std::uint8_t> out;
  out.reserve(serialized_size(v.size(), v.precision()));
  serialize_into(out, v.values(), v.precision());
  return out;
}

GradientVector deserialize(std::span<const std::uint8_t> bytes,
                           std::size_t& offset) {
  if (offset > bytes.size()) throw DecodeError("offset past end of buffer");
  wire::Reader r(bytes.subspan(offset));
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw DecodeError("unknown precision tag " + std::to_string(tag));
  const auto precision = static_cast<Precision>(tag);
  const std::uint32_t count = r.u32();
  if (r.remaining() < std::size_t{count} * element_bytes(precision)) {
    throw DecodeError("vector payload truncated");
  }
  std::vector<double> values(count);
  for (auto& v : values) {
    v = precision == Precision::kHalf
            ? precision::from_half(precision::Half{r.u16()})
            : r.f64();
  }
  offset += r.position();
  return GradientVector(std::move(values), precision);
}

GradientVector deserialize(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  auto v = deserialize(bytes, offset);
  if (offset != bytes.size()) throw DecodeError("trailing bytes after vector");
  return v;
}

}  // namespace gradsim::tensor
