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

#include "gradsim/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"

namespace gradsim::optim {
namespace {

constexpr std::uint64_t kGossipStream = 0x6055;

void same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void Hyperparams::validate() const {
  if (!(eta > 0.0)) throw ConfigError("eta", "must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size", "must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
  if (!(rho >= 0.0)) throw ConfigError("rho", "must be >= 0");
  if (tau == 0) throw ConfigError("tau", "must be >= 1");
  if (!(trust > 0.0 && trust < 1.0)) throw ConfigError("trust", "must lie in (0, 1)");
  if (!(gamma > 0.0)) throw ConfigError("gamma", "must be > 0");
  if (!(k >= 1.0)) throw ConfigError("k", "must be >= 1");
  if (!(warmup_epochs >= 0.0)) throw ConfigError("warmup_epochs", "must be >= 0");
}

bool sgd_step(std::span<double> w, std::span<const double> grad_sum, double eta,
              std::size_t n) {
  same_size(w.size(), grad_sum.size(), "sgd_step");
  if (n == 0) throw InvalidArgument("sgd_step: batch size must be >= 1");
  if (!all_finite(grad_sum)) return false;
  const double scale = eta / static_cast<double>(n);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * grad_sum[i];
  return true;
}

bool sgd_step(ModelState& state, std::span<const double> grad_sum, double eta,
              std::size_t n) {
  if (!sgd_step(state.weights.values(), grad_sum, eta, n)) return false;
  ++state.version;
  return true;
}

bool momentum_step(std::span<double> w, std::span<double> velocity,
                   std::span<const double> grad_sum, double eta, double m,
                   std::size_t n) {
  same_size(w.size(), grad_sum.size(), "momentum_step");
  same_size(w.size(), velocity.size(), "momentum_step");
  if (n == 0) throw InvalidArgument("momentum_step: batch size must be >= 1");
  if (!all_finite(grad_sum)) return false;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < w.size(); ++i) {
    velocity[i] = m * velocity[i] + grad_sum[i] * inv;
    w[i] -= eta * velocity[i];
  }
  return true;
}

void AsyncConfig::validate() const {
  if (lambda == 0) throw ConfigError("async.lambda", "must be >= 1");
  if (softsync_n == 0 || softsync_n > lambda) {
    throw ConfigError("async.softsync_n", "must lie in [1, lambda]");
  }
}

std::size_t AsyncConfig::c() const {
  validate();
  return lambda / softsync_n;
}

std::size_t softsync_c(std::size_t lambda, std::size_t softsync_n) {
  return AsyncConfig{lambda, softsync_n}.c();
}

const char* to_string(StalenessPolicy p) noexcept {
  return p == StalenessPolicy::kNone ? "none" : "inverse-linear";
}

StalenessPolicy staleness_policy_from_string(const std::string& name) {
  if (name == "inverse-linear") return StalenessPolicy::kInverseLinear;
  if (name == "none") return StalenessPolicy::kNone;
  throw InvalidArgument("unknown staleness policy '" + name + "'");
}

double staleness_lr(double eta, std::uint64_t staleness, StalenessPolicy policy) {
  if (policy == StalenessPolicy::kNone) return eta;
  return eta / (1.0 + static_cast<double>(staleness));
}

void easgd_worker_update(std::span<double> x, std::span<const double> g,
                         std::span<const double> center, double eta, double rho) {
  same_size(x.size(), g.size(), "easgd_worker_update");
  same_size(x.size(), center.size(), "easgd_worker_update");
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] -= eta * (g[i] + rho * (x[i] - center[i]));
  }
}

void easgd_center_update(std::span<double> center,
                         std::span<const std::vector<double>> workers,
                         double eta, double rho) {
  std::vector<double> pull(center.size(), 0.0);
  for (const auto& x : workers) {
    same_size(x.size(), center.size(), "easgd_center_update");
    for (std::size_t i = 0; i < x.size(); ++i) pull[i] += rho * (x[i] - center[i]);
  }
  for (std::size_t i = 0; i < center.size(); ++i) center[i] += eta * pull[i];
}

double elastic_penalty(std::span<const double> center,
                       std::span<const std::vector<double>> workers, double rho) {
  double total = 0.0;
  for (const auto& x : workers) {
    same_size(x.size(), center.size(), "elastic_penalty");
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - center[i]) * (x[i] - center[i]);
    total += 0.5 * rho * sq;
  }
  return total;
}

std::vector<std::pair<std::size_t, std::size_t>> gossip_matching(
    std::size_t count, std::uint64_t seed, std::uint64_t round) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates on counter-based draws keyed by the round.
  for (std::size_t i = count; i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        uniform01(seed, kGossipStream, (round << 20) + i) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i + 1 < count; i += 2) {
    pairs.emplace_back(std::min(order[i], order[i + 1]), std::max(order[i], order[i + 1]));
  }
  return pairs;
}

std::vector<std::pair<std::size_t, std::size_t>> gossip_round(
    std::vector<std::vector<double>>& nodes, std::uint64_t seed, std::uint64_t round) {
  auto pairs = gossip_matching(nodes.size(), seed, round);
  for (auto [a, b] : pairs) {
    same_size(nodes[a].size(), nodes[b].size(), "gossip_round");
    for (std::size_t i = 0; i < nodes[a].size(); ++i) {
      const double avg = 0.5 * (nodes[a][i] + nodes[b][i]);
      nodes[a][i] = avg;
      nodes[b][i] = avg;
    }
  }
  return pairs;
}

double max_pairwise_distance(std::span<const std::vector<double>> nodes) {
  double best = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (std::size_t b = a + 1; b < nodes.size(); ++b) {
      double sq = 0.0;
      for (std::size_t i = 0; i < nodes[a].size(); ++i) {
        const double d = nodes[a][i] - nodes[b][i];
        sq += d * d;
      }
      best = std::max(best, std::sqrt(sq));
    }
  }
  return best;
}

double l2_norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

double lars_local_lr(std::span<const double> w, std::span<const double> g,
                     double trust, double beta, double eps) {
  same_size(w.size(), g.size(), "lars_local_lr");
  const double wn = l2_norm(w);
  const double denom = std::max(l2_norm(g) + beta * wn, eps);
  return trust * wn / denom;
}

std::vector<double> lars_update(std::span<double> w, std::span<const double> g,
                                std::span<const tensor::LayerSpan> layers,
                                double trust, double beta, double gamma, double eps) {
  same_size(w.size(), g.size(), "lars_update");
  std::vector<double> rates;
  rates.reserve(layers.size());
  for (const auto& l : layers) {
    if (l.start + l.length > w.size()) throw ShapeError("lars_update: layer outside vector");
    auto wl = w.subspan(l.start, l.length);
    auto gl = g.subspan(l.start, l.length);
    const double lambda = lars_local_lr(wl, gl, trust, beta, eps);
    for (std::size_t i = 0; i < l.length; ++i) wl[i] -= gamma * lambda * gl[i];
    rates.push_back(lambda);
  }
  return rates;
}

double linear_scaling_schedule(double base_eta, double k, double epoch,
                               double warmup_epochs) {
  if (!(warmup_epochs >= 0.0)) throw InvalidArgument("warmup_epochs must be >= 0");
  if (epoch >= warmup_epochs) return k * base_eta;
  if (epoch <= 0.0) return base_eta;
  return base_eta * (1.0 + (k - 1.0) * epoch / warmup_epochs);
}

double polynomial_decay(double base, std::uint64_t step, std::uint64_t total,
                        double power) {
  if (total == 0 || step >= total) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return base * std::pow(frac, power);
}

std::size_t batch_size_schedule(std::size_t base_b, double factor,
                                double interval_epochs, double epoch,
                                std::size_t max_b, std::size_t dataset_size) {
  if (base_b == 0) throw ConfigError("batch.base", "must be >= 1");
  if (!(factor > 1.0)) throw ConfigError("batch.factor", "must be > 1");
  if (!(interval_epochs > 0.0)) throw ConfigError("batch.interval_epochs", "must be > 0");
  if (max_b < base_b) throw ConfigError("batch.max", "must be >= the base batch size");
  if (max_b * 10 > dataset_size) {
    throw ConfigError("batch.max", "must not exceed a tenth of the dataset size (" +
                                       std::to_string(dataset_size / 10) + ")");
  }
  const double stages = std::floor(std::max(epoch, 0.0) / interval_epochs);
  const double b = static_cast<double>(base_b) * std::pow(factor, stages);
  if (b >= static_cast<double>(max_b)) return max_b;
  return static_cast<std::size_t>(b);
}

}  // namespace gradsim::optim
