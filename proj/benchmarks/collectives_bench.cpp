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

#include <benchmark/benchmark.h>

#include <vector>

#include "gradsim/collectives.hpp"
#include "gradsim/ftreduce.hpp"
#include "gradsim/rng.hpp"

namespace {

using namespace gradsim;

std::vector<tensor::GradientVector> inputs(std::size_t p, std::size_t len) {
  Rng rng(p);
  std::vector<tensor::GradientVector> in;
  for (std::size_t k = 0; k < p; ++k) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    in.emplace_back(std::move(v));
  }
  return in;
}

const sim::LatencyModel kLat{1e-5, 1e-9, sim::Straggler::none(), 0};

void BM_AllReduce(benchmark::State& state, coll::Algorithm alg) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const auto len = static_cast<std::size_t>(state.range(1));
  const auto in = inputs(p, len);
  coll::CollectiveOptions co;
  co.group_size = 4;
  for (auto _ : state) {
    sim::Simulator sim(p, kLat, {1.0, false});
    auto r = coll::all_reduce(sim, alg, in, co);
    benchmark::DoNotOptimize(r.outputs.data());
    state.counters["sim_s"] = r.elapsed;
  }
  state.SetBytesProcessed(int64_t(state.iterations()) * int64_t(p * len * sizeof(double)));
}

void args(benchmark::internal::Benchmark* b) {
  for (int p : {7, 16, 33}) {
    for (int len : {1000, 100000}) b->Args({p, len});
  }
}

BENCHMARK_CAPTURE(BM_AllReduce, ring, coll::Algorithm::kRing)->Apply(args);
BENCHMARK_CAPTURE(BM_AllReduce, halving_doubling, coll::Algorithm::kRecursiveHalvingDoubling)->Apply(args);
BENCHMARK_CAPTURE(BM_AllReduce, binary_blocks, coll::Algorithm::kBinaryBlocks)->Apply(args);
BENCHMARK_CAPTURE(BM_AllReduce, hierarchical, coll::Algorithm::kHierarchical)->Apply(args);

void BM_TolerantAllReduce(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  const auto in = inputs(p, 1000);
  for (auto _ : state) {
    sim::Simulator sim(p * 3, kLat, {0.05, false});
    auto r = ft::tolerant_all_reduce(sim, in);
    benchmark::DoNotOptimize(r.outputs.data());
  }
}
BENCHMARK(BM_TolerantAllReduce)->Arg(4)->Arg(16);

}  // namespace
