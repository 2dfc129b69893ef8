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

#include "gradsim/compress.hpp"
#include "gradsim/rng.hpp"

namespace {

using namespace gradsim;

std::vector<double> gradient(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> g(n);
  for (auto& x : g) x = rng.normal();
  return g;
}

void BM_DgcStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  compress::DgcConfig cfg;
  cfg.warmup = false;
  compress::DgcState dgc(n, cfg);
  const auto g = gradient(n, 1);
  for (auto _ : state) {
    auto s = dgc.step(g, {}, 0.999);
    benchmark::DoNotOptimize(s.values.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_DgcStep)->Arg(10000)->Arg(1000000);

void BM_GradientDrop(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = gradient(n, 2);
  std::vector<double> residual(n, 0.0);
  for (auto _ : state) {
    auto r = compress::gradient_drop(g, residual, 99.0);
    residual.swap(r.residual);
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_GradientDrop)->Arg(10000)->Arg(1000000);

void BM_OneBit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = gradient(n, 3);
  std::vector<double> error(n, 0.0);
  for (auto _ : state) {
    auto r = compress::onebit_quantize(g, error);
    error.swap(r.error);
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_OneBit)->Arg(10000)->Arg(1000000);

void BM_SparseCodec(benchmark::State& state) {
  const auto g = gradient(100000, 4);
  compress::DgcConfig cfg;
  cfg.warmup = false;
  compress::DgcState dgc(g.size(), cfg);
  const auto sparse = dgc.step(g, {}, 0.99);
  for (auto _ : state) {
    auto bytes = compress::sparse_encode(sparse);
    auto back = compress::sparse_decode(bytes);
    benchmark::DoNotOptimize(back.values.data());
  }
}
BENCHMARK(BM_SparseCodec);

}  // namespace
