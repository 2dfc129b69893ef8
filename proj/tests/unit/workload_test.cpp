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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gradsim/error.hpp"
#include "gradsim/rng.hpp"
#include "gradsim/workload.hpp"

namespace gradsim::workload {
namespace {

std::vector<std::size_t> all_examples(const Workload& w) {
  std::vector<std::size_t> idx(w.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Central differences of the summed loss over a small batch.
void check_gradient(const WorkloadSpec& spec) {
  auto w = generate_workload(spec);
  const std::vector<std::size_t> batch{0, 1, 2, w->size() - 1};
  Rng rng(spec.seed, 5);
  int worst_point = -1;
  double worst = 0.0;
  for (int point = 0; point < 100; ++point) {
    std::vector<double> x(w->params());
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<double> g(x.size(), 0.0);
    w->gradient_sum(x, batch, g);
    std::vector<double> fd(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
      auto xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      fd[i] = (w->loss_sum(xp, batch) - w->loss_sum(xm, batch)) / (2.0 * h);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += (g[i] - fd[i]) * (g[i] - fd[i]);
      den += g[i] * g[i];
    }
    const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
    if (rel > worst) {
      worst = rel;
      worst_point = point;
    }
  }
  EXPECT_LT(worst, 1e-6) << to_string(spec.kind) << " point " << worst_point;
}

TEST(Quadratic, GradientVanishesAtOptimum) {
  WorkloadSpec spec;
  spec.dim = 20;
  auto w = generate_workload(spec);
  auto star = w->optimum();
  ASSERT_EQ(star.size(), 20u);
  auto g = w->full_gradient(star);
  for (double x : g) EXPECT_NEAR(x, 0.0, 1e-12);
  EXPECT_NEAR(w->loss(star), 0.0, 1e-12);
}

TEST(Quadratic, ConditionBounded) {
  WorkloadSpec spec;
  spec.condition = 100.0;
  Quadratic q(spec);
  const auto& d = q.curvature();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  EXPECT_GT(*lo, 0.0);
  EXPECT_LE(*hi / *lo, 100.0 + 1e-9);
  spec.condition = 1000.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(Quadratic, StreamedOptimumIsCentre) {
  WorkloadSpec spec;
  spec.stream = true;
  spec.size = std::size_t{1} << 30;
  auto w = generate_workload(spec);
  auto star = w->optimum();
  EXPECT_EQ(w->loss(star), 0.0);
}

TEST(FiniteDifference, Quadratic) {
  WorkloadSpec spec;
  spec.dim = 12;
  check_gradient(spec);
}

TEST(FiniteDifference, Logistic) {
  WorkloadSpec spec;
  spec.kind = Kind::kLogistic;
  spec.dim = 8;
  check_gradient(spec);
}

TEST(FiniteDifference, Mlp) {
  WorkloadSpec spec;
  spec.kind = Kind::kMlp;
  spec.dim = 4;
  spec.hidden = 5;
  check_gradient(spec);
}

TEST(Workload, SameSeedSameData) {
  for (auto kind : {Kind::kQuadratic, Kind::kLogistic, Kind::kMlp}) {
    WorkloadSpec spec;
    spec.kind = kind;
    spec.seed = 77;
    auto a = generate_workload(spec);
    auto b = generate_workload(spec);
    auto w = a->initial_weights();
    EXPECT_EQ(w, b->initial_weights());
    auto idx = all_examples(*a);
    std::vector<double> ga(a->params(), 0.0), gb(b->params(), 0.0);
    a->gradient_sum(w, idx, ga);
    b->gradient_sum(w, idx, gb);
    EXPECT_EQ(ga, gb);
    spec.seed = 78;
    EXPECT_NE(generate_workload(spec)->initial_weights(), w);
  }
}

TEST(Workload, LogisticIsSeparable) {
  WorkloadSpec spec;
  spec.kind = Kind::kLogistic;
  spec.l2 = 1e-4;
  Logistic lg(spec);
  std::vector<double> w = lg.initial_weights();
  auto idx = all_examples(lg);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> g(w.size(), 0.0);
    lg.gradient_sum(w, idx, g);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 1.0 * g[i] / double(idx.size());
  }
  EXPECT_GT(lg.accuracy(w), 0.97);
}

TEST(Workload, UnknownKind) {
  EXPECT_THROW(kind_from_string("resnet"), InvalidArgument);
  WorkloadSpec spec;
  spec.dim = 0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(Workload, LayersTileParameters) {
  WorkloadSpec spec;
  spec.dim = 10;
  spec.layers = 3;
  auto w = generate_workload(spec);
  std::size_t next = 0;
  for (const auto& l : w->layers()) {
    EXPECT_EQ(l.start, next);
    next += l.length;
  }
  EXPECT_EQ(next, 10u);
}

TEST(Shard, RoundRobin) {
  EXPECT_EQ(shard(10, 3, 0), (std::vector<std::size_t>{0, 3, 6, 9}));
  EXPECT_EQ(shard(10, 3, 2), (std::vector<std::size_t>{2, 5, 8}));
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(shard_count(10, 3, k), shard(10, 3, k).size());
}

TEST(Shard, BatchesCycle) {
  const auto s = shard(10, 3, 1);  // 1, 4, 7
  EXPECT_EQ(shard_batch(10, 3, 1, 0, 2), (std::vector<std::size_t>{1, 4}));
  EXPECT_EQ(shard_batch(10, 3, 1, 1, 2), (std::vector<std::size_t>{7, 1}));
  EXPECT_EQ(s.size(), 3u);
}

}  // namespace
}  // namespace gradsim::workload
