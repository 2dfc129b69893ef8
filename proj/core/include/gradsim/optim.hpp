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
#include <string>
#include <utility>
#include <vector>

#include "gradsim/tensor.hpp"

namespace gradsim::optim {

struct Hyperparams {
  double eta = 0.1;
  std::size_t batch_size = 1;  // per worker
  double momentum = 0.0;
  double weight_decay = 0.0;   // beta
  double rho = 0.0;            // EASGD elastic coefficient
  std::size_t tau = 1;         // EASGD communication period
  double trust = 0.001;        // LARS
  double gamma = 1.0;          // LARS global rate
  double k = 1.0;              // scale factor for the linear scaling rule
  double warmup_epochs = 5.0;

  void validate() const;
};

struct ModelState {
  tensor::GradientVector weights;
  std::optional<tensor::GradientVector> center;
  std::optional<tensor::GradientVector> velocity;
  std::uint64_t version = 0;
};

// w <- w - eta / n * grad_sum. Returns false and leaves w untouched when
// grad_sum holds a non-finite value.
bool sgd_step(std::span<double> w, std::span<const double> grad_sum,
              double eta, std::size_t n);
bool sgd_step(ModelState& state, std::span<const double> grad_sum, double eta,
              std::size_t n);

// v <- m v + g / n; w <- w - eta v.
bool momentum_step(std::span<double> w, std::span<double> velocity,
                   std::span<const double> grad_sum, double eta, double m,
                   std::size_t n);

struct AsyncConfig {
  std::size_t lambda = 1;      // learners
  std::size_t softsync_n = 1;

  void validate() const;
  std::size_t c() const;
};

// floor(lambda / n) after validating 1 <= n <= lambda.
std::size_t softsync_c(std::size_t lambda, std::size_t softsync_n);

enum class StalenessPolicy : std::uint8_t {
  kInverseLinear,  // eta / (1 + staleness)
  kNone,
};

const char* to_string(StalenessPolicy p) noexcept;
StalenessPolicy staleness_policy_from_string(const std::string& name);

double staleness_lr(double eta, std::uint64_t staleness, StalenessPolicy policy);

// x <- x - eta * (g + rho * (x - center)).
void easgd_worker_update(std::span<double> x, std::span<const double> g,
                         std::span<const double> center, double eta, double rho);
// center <- center + eta * sum_i rho * (x_i - center), all terms against the
// incoming center.
void easgd_center_update(std::span<double> center,
                         std::span<const std::vector<double>> workers,
                         double eta, double rho);
// sum_i rho / 2 * |x_i - center|^2.
double elastic_penalty(std::span<const double> center,
                       std::span<const std::vector<double>> workers, double rho);

// One round of symmetric pairwise averaging over a seeded random perfect
// matching; with an odd count one node sits out. Returns the pairs used.
std::vector<std::pair<std::size_t, std::size_t>> gossip_round(
    std::vector<std::vector<double>>& nodes, std::uint64_t seed,
    std::uint64_t round);
std::vector<std::pair<std::size_t, std::size_t>> gossip_matching(
    std::size_t count, std::uint64_t seed, std::uint64_t round);

double max_pairwise_distance(std::span<const std::vector<double>> nodes);

inline constexpr double kLarsEpsilon = 1e-12;

double l2_norm(std::span<const double> v);

// trust * |w| / max(|g| + beta |w|, eps).
double lars_local_lr(std::span<const double> w, std::span<const double> g,
                     double trust, double beta, double eps = kLarsEpsilon);

// Delta w = gamma * lambda * g for each layer; returns the per-layer rates.
std::vector<double> lars_update(std::span<double> w, std::span<const double> g,
                                std::span<const tensor::LayerSpan> layers,
                                double trust, double beta, double gamma,
                                double eps = kLarsEpsilon);

// base * (1 + (k - 1) * epoch / warmup) during warmup, then k * base.
double linear_scaling_schedule(double base_eta, double k, double epoch,
                               double warmup_epochs);

// gamma_0 * (1 - step / total)^power, zero past the end.
double polynomial_decay(double base, std::uint64_t step, std::uint64_t total,
                        double power = 2.0);

// min(base * factor^floor(epoch / interval), max_b). ConfigError when
// max_b exceeds a tenth of the dataset or factor <= 1.
std::size_t batch_size_schedule(std::size_t base_b, double factor,
                                double interval_epochs, double epoch,
                                std::size_t max_b, std::size_t dataset_size);

}  // namespace gradsim::optim
