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

#include "gradsim/compress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/wire.hpp"

namespace gradsim::compress {
namespace {

constexpr std::uint32_t kOneBitMagic = 0x31424F47;  // "GOB1"
constexpr std::uint64_t kTernaryStream = 0x7E42;

void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("vector length mismatch");
}

std::vector<tensor::LayerSpan> layers_or_whole(std::span<const tensor::LayerSpan> layers,
                                               std::size_t length) {
  if (layers.empty()) return {{0, length}};
  std::size_t at = 0;
  for (const auto& l : layers) {
    if (l.start != at) throw ShapeError("layers must tile the vector in order");
    at += l.length;
  }
  if (at != length) throw ShapeError("layers must tile the vector in order");
  return {layers.begin(), layers.end()};
}

}  // namespace

std::size_t SparseGradient::encoding_bytes() const noexcept {
  return sparse_encoded_size(indices.size());
}

void SparseGradient::validate() const {
  if (indices.size() != values.size()) {
    throw InvalidArgument("sparse gradient: index/value count mismatch");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= dense_length) throw InvalidArgument("sparse gradient: index out of range");
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw InvalidArgument("sparse gradient: indices not strictly increasing");
    }
  }
}

std::vector<double> SparseGradient::to_dense() const {
  std::vector<double> out(dense_length, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
  return out;
}

std::size_t sparse_encoded_size(std::size_t count) noexcept {
  return kSparseHeaderBytes + count * (4 + 8);
}

std::vector<std::uint8_t> sparse_encode(const SparseGradient& g) {
  g.validate();
  if (g.dense_length > 0xFFFFFFFFu) throw InvalidArgument("sparse gradient too long");
  wire::Writer w;
  w.u32(kSparseMagic);
  w.u32(static_cast<std::uint32_t>(g.dense_length));
  w.u32(static_cast<std::uint32_t>(g.indices.size()));
  for (auto i : g.indices) w.u32(i);
  for (double v : g.values) w.f64(v);
  return w.take();
}

SparseGradient sparse_decode(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  if (r.u32() != kSparseMagic) throw DecodeError("bad sparse gradient magic");
  SparseGradient g;
  g.dense_length = r.u32();
  const std::uint32_t count = r.u32();
  if (r.remaining() != std::size_t{count} * 12) {
    throw DecodeError("sparse gradient size does not match its count");
  }
  g.indices.resize(count);
  g.values.resize(count);
  for (auto& i : g.indices) i = r.u32();
  for (auto& v : g.values) v = r.f64();
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw DecodeError(e.what());
  }
  return g;
}

double compression_ratio(std::size_t dense_bytes, std::size_t encoded_bytes) {
  if (encoded_bytes == 0) throw InvalidArgument("encoded size must be positive");
  return static_cast<double>(dense_bytes) / static_cast<double>(encoded_bytes);
}

std::vector<double> sparse_sum(std::span<const SparseGradient> parts) {
  if (parts.empty()) return {};
  std::vector<double> out(parts[0].dense_length, 0.0);
  for (const auto& p : parts) {
    check_same(p.dense_length, out.size());
    for (std::size_t i = 0; i < p.indices.size(); ++i) out[p.indices[i]] += p.values[i];
  }
  return out;
}

std::size_t keep_count(std::size_t length, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw InvalidArgument("sparsity must lie in [0, 1)");
  }
  if (length == 0) return 0;
  const double exact = (1.0 - sparsity) * static_cast<double>(length);
  // Guard against 0.3 * 10 landing a hair above 3.
  const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(k, 1, length);
}

std::vector<std::uint32_t> top_magnitude(std::span<const double> v, std::size_t keep) {
  keep = std::min(keep, v.size());
  std::vector<std::uint32_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::fabs(v[a]);
    const double mb = std::fabs(v[b]);
    return ma != mb ? ma > mb : a < b;
  };
  if (keep < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep),
                     idx.end(), before);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> local_gradient_clip(std::span<const double> g, double threshold) {
  if (!(threshold > 0.0)) throw InvalidArgument("clip threshold must be positive");
  double sq = 0.0;
  for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  std::vector<double> out(g.begin(), g.end());
  if (norm > threshold) {
    const double f = threshold / norm;
    for (auto& x : out) x *= f;
  }
  return out;
}

double warmup_sparsity(double start, double final_s, std::size_t epochs, double epoch) {
  if (!(start >= 0.0 && start < 1.0) || !(final_s >= 0.0 && final_s < 1.0)) {
    throw InvalidArgument("sparsity must lie in [0, 1)");
  }
  if (epochs == 0 || epoch >= static_cast<double>(epochs)) return final_s;
  const double e = std::floor(std::max(epoch, 0.0));
  const double q = std::pow((1.0 - final_s) / (1.0 - start), 1.0 / static_cast<double>(epochs));
  return 1.0 - (1.0 - start) * std::pow(q, e);
}

void DgcConfig::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw InvalidArgument("sparsity must lie in [0, 1)");
  if (clipping && !(clip_threshold > 0.0)) {
    throw InvalidArgument("clip threshold must be positive");
  }
  if (warmup && !(warmup_start >= 0.0 && warmup_start <= sparsity)) {
    throw InvalidArgument("warmup start must lie in [0, sparsity]");
  }
}

double DgcConfig::sparsity_at(double epoch) const {
  if (!warmup) return sparsity;
  return warmup_sparsity(warmup_start, sparsity, warmup_epochs, epoch);
}

DgcState::DgcState(std::size_t length, DgcConfig config)
    : config_(config), u_(length, 0.0), v_(length, 0.0) {
  config_.validate();
}

SparseGradient DgcState::step(std::span<const double> g,
                              std::span<const tensor::LayerSpan> layers,
                              double sparsity) {
  check_same(g.size(), u_.size());
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw InvalidArgument("sparsity must lie in [0, 1)");
  }
  std::vector<double> grad(g.begin(), g.end());
  if (config_.clipping) grad = local_gradient_clip(grad, config_.clip_threshold);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    u_[i] = config_.momentum * u_[i] + grad[i];
    v_[i] += u_[i];
  }
  SparseGradient out;
  out.dense_length = grad.size();
  for (const auto& layer : layers_or_whole(layers, grad.size())) {
    if (layer.length == 0) continue;
    std::span<const double> seg(v_.data() + layer.start, layer.length);
    for (auto local : top_magnitude(seg, keep_count(layer.length, sparsity))) {
      const std::size_t i = layer.start + local;
      out.indices.push_back(static_cast<std::uint32_t>(i));
      out.values.push_back(v_[i]);
      v_[i] = 0.0;
      if (config_.mask_momentum) u_[i] = 0.0;
    }
  }
  return out;
}

DropResult gradient_drop(std::span<const double> g, std::span<const double> residual,
                         double drop_percent) {
  check_same(g.size(), residual.size());
  if (!(drop_percent >= 0.0 && drop_percent < 100.0)) {
    throw InvalidArgument("drop percentage must lie in [0, 100)");
  }
  DropResult out;
  out.residual.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.residual[i] = g[i] + residual[i];
  out.sent.dense_length = g.size();
  if (g.empty()) return out;
  const auto keep = keep_count(g.size(), drop_percent / 100.0);
  out.sent.indices = top_magnitude(out.residual, keep);
  for (auto i : out.sent.indices) {
    out.sent.values.push_back(out.residual[i]);
    out.residual[i] = 0.0;
  }
  return out;
}

std::vector<double> OneBitGradient::dequantize() const {
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = sign_bit(i) ? static_cast<double>(positive_scale)
                         : -static_cast<double>(negative_scale);
  }
  return out;
}

std::size_t OneBitGradient::encoding_bytes() const noexcept {
  return 16 + (length + 7) / 8;
}

OneBitResult onebit_quantize(std::span<const double> g, std::span<const double> error) {
  check_same(g.size(), error.size());
  OneBitResult out;
  auto& q = out.quantized;
  q.length = g.size();
  q.signs.assign((g.size() + 7) / 8, 0);
  std::vector<double> acc(g.size());
  double pos_sum = 0.0;
  double neg_sum = 0.0;
  std::size_t pos_n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    acc[i] = g[i] + error[i];
    if (acc[i] >= 0.0) {
      q.signs[i / 8] = static_cast<std::uint8_t>(q.signs[i / 8] | (1u << (i % 8)));
      pos_sum += acc[i];
      ++pos_n;
    } else {
      neg_sum -= acc[i];
    }
  }
  const std::size_t neg_n = g.size() - pos_n;
  q.positive_scale = pos_n ? static_cast<float>(pos_sum / static_cast<double>(pos_n)) : 0.0f;
  q.negative_scale = neg_n ? static_cast<float>(neg_sum / static_cast<double>(neg_n)) : 0.0f;
  const auto deq = q.dequantize();
  out.error.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.error[i] = acc[i] - deq[i];
  return out;
}

std::vector<std::uint8_t> onebit_encode(const OneBitGradient& q) {
  if (q.signs.size() != (q.length + 7) / 8) throw InvalidArgument("sign buffer size mismatch");
  wire::Writer w;
  w.u32(kOneBitMagic);
  w.u32(static_cast<std::uint32_t>(q.length));
  w.f32(q.positive_scale);
  w.f32(q.negative_scale);
  w.bytes(q.signs);
  return w.take();
}

OneBitGradient onebit_decode(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  if (r.u32() != kOneBitMagic) throw DecodeError("bad one-bit magic");
  OneBitGradient q;
  q.length = r.u32();
  q.positive_scale = r.f32();
  q.negative_scale = r.f32();
  if (r.remaining() != (q.length + 7) / 8) throw DecodeError("one-bit payload size mismatch");
  auto s = r.bytes(r.remaining());
  q.signs.assign(s.begin(), s.end());
  return q;
}

std::vector<double> TernaryGradient::dequantize() const {
  std::vector<double> out(levels.size(), 0.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = layers[l].start; i < layers[l].start + layers[l].length; ++i) {
      out[i] = levels[i] * scalers[l];
    }
  }
  return out;
}

TernaryGradient ternary_quantize(std::span<const double> g,
                                 std::span<const tensor::LayerSpan> layers,
                                 double clip, std::uint64_t seed,
                                 std::uint64_t draw_base) {
  if (!(clip > 0.0)) throw InvalidArgument("ternary clip must be positive");
  TernaryGradient out;
  out.layers = layers_or_whole(layers, g.size());
  out.levels.assign(g.size(), 0);
  for (const auto& layer : out.layers) {
    std::vector<double> seg(g.begin() + static_cast<std::ptrdiff_t>(layer.start),
                            g.begin() + static_cast<std::ptrdiff_t>(layer.start + layer.length));
    if (!seg.empty()) {
      const double mean =
          std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(seg.size());
      double var = 0.0;
      for (double x : seg) var += (x - mean) * (x - mean);
      const double sigma = std::sqrt(var / static_cast<double>(seg.size()));
      if (sigma > 0.0) {
        const double bound = clip * sigma;
        for (auto& x : seg) x = std::clamp(x, -bound, bound);
      }
    }
    double scaler = 0.0;
    for (double x : seg) scaler = std::max(scaler, std::fabs(x));
    out.scalers.push_back(scaler);
    if (scaler == 0.0) continue;
    for (std::size_t j = 0; j < seg.size(); ++j) {
      const std::size_t i = layer.start + j;
      const double prob = std::fabs(seg[j]) / scaler;
      if (uniform01(seed, kTernaryStream, draw_base + i) < prob) {
        out.levels[i] = seg[j] > 0.0 ? 1 : -1;
      }
    }
  }
  return out;
}

}  // namespace gradsim::compress
