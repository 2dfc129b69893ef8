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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gradsim/tensor.hpp"

// Synthetic training problems with analytic gradients.

namespace gradsim::workload {

enum class Kind : std::uint8_t { kQuadratic, kLogistic, kMlp };

const char* to_string(Kind k) noexcept;
Kind kind_from_string(const std::string& name);

struct WorkloadSpec {
  Kind kind = Kind::kQuadratic;
  std::size_t dim = 20;      // parameters (quadratic, logistic) or inputs (mlp)
  std::size_t size = 1024;   // dataset examples
  std::uint64_t seed = 1;
  double condition = 10.0;   // quadratic: max/min curvature, <= 100
  double noise = 1.0;        // quadratic: std-dev of data points around the centre
  // Quadratic only: examples are regenerated on demand instead of stored,
  // and the objective is the population one, minimised at the centre.
  bool stream = false;
  std::size_t hidden = 8;    // mlp
  double l2 = 1e-3;          // logistic: ridge term keeping it strongly convex
  std::size_t layers = 1;    // quadratic/logistic: equal-width layer split

  void validate() const;
};

class Workload {
 public:
  virtual ~Workload() = default;

  virtual Kind kind() const noexcept = 0;
  // Parameter count.
  virtual std::size_t params() const noexcept = 0;
  std::size_t size() const noexcept { return size_; }
  const std::vector<tensor::LayerSpan>& layers() const noexcept { return layers_; }

  // Adds the per-example gradients of every example in `batch` (not
  // averaged) to `out`, in batch order.
  virtual void gradient_sum(std::span<const double> w,
                            std::span<const std::size_t> batch,
                            std::span<double> out) const = 0;
  // Per-example loss summed over `batch`.
  virtual double loss_sum(std::span<const double> w,
                          std::span<const std::size_t> batch) const = 0;
  // Full-dataset objective. For the quadratic this is the excess over the
  // optimum, so it reaches 0 at the minimiser.
  virtual double loss(std::span<const double> w) const;
  // Seeded standard normal draws unless a workload overrides it.
  virtual std::vector<double> initial_weights() const;

  // Known minimiser when one exists (quadratic); empty otherwise.
  virtual std::vector<double> optimum() const { return {}; }

  std::vector<double> full_gradient(std::span<const double> w) const;

 protected:
  Workload(std::size_t size, std::uint64_t seed) : size_(size), seed_(seed) {}

  std::size_t size_;
  std::uint64_t seed_;
  std::vector<tensor::LayerSpan> layers_;
};

// f_j(w) = 1/2 (w - x_j)^T D (w - x_j), D diagonal.
class Quadratic final : public Workload {
 public:
  explicit Quadratic(const WorkloadSpec& spec);

  Kind kind() const noexcept override { return Kind::kQuadratic; }
  std::size_t params() const noexcept override { return dim_; }
  void gradient_sum(std::span<const double> w, std::span<const std::size_t> batch,
                    std::span<double> out) const override;
  double loss_sum(std::span<const double> w,
                  std::span<const std::size_t> batch) const override;
  double loss(std::span<const double> w) const override;
  std::vector<double> optimum() const override { return mean_; }

  const std::vector<double>& curvature() const noexcept { return d_; }

 private:
  double sample(std::size_t j, std::size_t i) const noexcept;
  const double* example(std::size_t j, std::vector<double>& scratch) const;

  std::size_t dim_;
  double noise_;
  bool stream_;
  std::vector<double> d_;
  std::vector<double> center_;
  std::vector<double> x_;  // size x dim; empty when streaming
  std::vector<double> mean_;
};

// Ridge-regularised logistic regression on linearly separable data.
class Logistic final : public Workload {
 public:
  explicit Logistic(const WorkloadSpec& spec);

  Kind kind() const noexcept override { return Kind::kLogistic; }
  std::size_t params() const noexcept override { return dim_; }
  void gradient_sum(std::span<const double> w, std::span<const std::size_t> batch,
                    std::span<double> out) const override;
  double loss_sum(std::span<const double> w,
                  std::span<const std::size_t> batch) const override;

  double accuracy(std::span<const double> w) const;

 private:
  std::size_t dim_;
  double l2_;
  std::vector<double> x_;
  std::vector<double> y_;  // +-1
};

// inputs -> tanh hidden layer -> scalar, squared error against a fixed
// random teacher of the same shape. Layers: W1, b1, w2, b2.
class Mlp final : public Workload {
 public:
  explicit Mlp(const WorkloadSpec& spec);

  Kind kind() const noexcept override { return Kind::kMlp; }
  std::size_t params() const noexcept override { return params_; }
  void gradient_sum(std::span<const double> w, std::span<const std::size_t> batch,
                    std::span<double> out) const override;
  double loss_sum(std::span<const double> w,
                  std::span<const std::size_t> batch) const override;
  std::vector<double> initial_weights() const override;

  double predict(std::span<const double> w, std::span<const double> x) const;

 private:
  std::size_t in_;
  std::size_t hidden_;
  std::size_t params_;
  std::vector<double> x_;
  std::vector<double> y_;
};

std::unique_ptr<Workload> generate_workload(const WorkloadSpec& spec);

// Size of worker k's shard, without materialising it.
std::size_t shard_count(std::size_t size, std::size_t workers, std::size_t k);
// Examples owned by worker k of `workers`: j with j mod workers == k.
std::vector<std::size_t> shard(std::size_t size, std::size_t workers, std::size_t k);

// The `n` examples worker k uses at `step`, cycling through its shard.
std::vector<std::size_t> shard_batch(std::size_t size, std::size_t workers,
                                     std::size_t k, std::size_t step, std::size_t n);

}  // namespace gradsim::workload
