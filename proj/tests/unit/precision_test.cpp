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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gradsim/half.hpp"
#include "gradsim/precision.hpp"
#include "gradsim/rng.hpp"

namespace gradsim::precision {
namespace {

// Oracle decoder written straight from the binary16 layout.
double decode(std::uint16_t bits) {
  const int sign = bits >> 15;
  const int exp = (bits >> 10) & 0x1F;
  const int man = bits & 0x3FF;
  double mag;
  if (exp == 0) {
    mag = std::ldexp(double(man), -24);
  } else if (exp == 31) {
    mag = man ? std::numeric_limits<double>::quiet_NaN()
              : std::numeric_limits<double>::infinity();
  } else {
    mag = std::ldexp(double(1024 + man), exp - 25);
  }
  return sign ? -mag : mag;
}

// Nonnegative finite patterns in increasing order of value.
std::vector<std::uint16_t> positive_patterns() {
  std::vector<std::uint16_t> out;
  for (std::uint32_t b = 0; b < 0x7C00; ++b) out.push_back(std::uint16_t(b));
  return out;
}

// Round-to-nearest-even by search over the value table.
double nearest_half(double x, const std::vector<std::uint16_t>& table) {
  const double a = std::abs(x);
  const double max = decode(0x7BFF);
  // Halfway between max and the next step up (2^16) rounds to infinity.
  if (a >= 65520.0) return std::copysign(std::numeric_limits<double>::infinity(), x);
  auto it = std::lower_bound(table.begin(), table.end(), a,
                             [](std::uint16_t b, double v) { return decode(b) < v; });
  if (it == table.end()) return std::copysign(max, x);
  const double hi = decode(*it);
  if (hi == a || it == table.begin()) return std::copysign(hi, x);
  const double lo = decode(*(it - 1));
  double pick;
  if (a - lo < hi - a) {
    pick = lo;
  } else if (hi - a < a - lo) {
    pick = hi;
  } else {
    pick = (*(it - 1) & 1) ? hi : lo;
  }
  return std::copysign(pick, x);
}

TEST(Half, OneIs3C00) {
  auto c = to_half(1.0);
  EXPECT_EQ(c.value.bits, 0x3C00);
  EXPECT_EQ(from_half(c.value), 1.0);
  EXPECT_FALSE(c.overflow);
  EXPECT_FALSE(c.underflow);
}

TEST(Half, TinyUnderflowsToZero) {
  auto c = to_half(std::ldexp(1.0, -25));
  EXPECT_EQ(c.value.bits, 0x0000);
  EXPECT_TRUE(c.underflow);
  auto n = to_half(-std::ldexp(1.0, -26));
  EXPECT_EQ(n.value.bits, 0x8000);
  EXPECT_TRUE(n.underflow);
}

TEST(Half, LargeOverflowsToInfinity) {
  auto c = to_half(70000.0);
  EXPECT_EQ(c.value.bits, 0x7C00);
  EXPECT_TRUE(c.overflow);
  EXPECT_EQ(from_half(to_half(65504.0).value), 65504.0);
  EXPECT_FALSE(to_half(65504.0).overflow);
  EXPECT_EQ(to_half(-1e9).value.bits, 0xFC00);
}

TEST(Half, Constants) {
  EXPECT_EQ(kHalfMax, (2.0 - std::ldexp(1.0, -10)) * std::ldexp(1.0, 15));
  EXPECT_EQ(decode(0x0400), kHalfMinNormal);
  EXPECT_EQ(decode(0x0001), kHalfMinSubnormal);
}

TEST(Half, EveryFinitePatternRoundTrips) {
  std::uint32_t finite = 0;
  for (std::uint32_t b = 0; b <= 0xFFFF; ++b) {
    const Half h{std::uint16_t(b)};
    if (!is_finite(h)) continue;
    ++finite;
    const double v = from_half(h);
    ASSERT_EQ(v, decode(h.bits)) << std::hex << b;
    ASSERT_EQ(to_half(v).value.bits, h.bits) << std::hex << b;
  }
  EXPECT_EQ(finite, kHalfFinitePatterns);
}

TEST(Half, MatchesNearestEvenOracle) {
  const auto table = positive_patterns();
  Rng rng(12);
  for (int i = 0; i < 20000; ++i) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), int(rng.below(46)) - 28);
    ASSERT_EQ(round_to_half(x), nearest_half(x, table)) << x;
  }
  // Exact midpoints between neighbours.
  for (std::uint16_t b = 1; b < 0x7BFF; b += 7) {
    const double mid = 0.5 * (decode(b) + decode(b + 1));
    ASSERT_EQ(round_to_half(mid), nearest_half(mid, table)) << b;
  }
}

TEST(Half, NanStaysNan) {
  auto c = to_half(std::numeric_limits<double>::quiet_NaN());
  EXPECT_TRUE(is_nan(c.value));
}

TEST(LossScale, ScaleOneIsIdentity) {
  LossScaleState st;
  EXPECT_EQ(scale_loss(3.5, st), 3.5);
  std::vector<double> g{0.1, -2.0};
  EXPECT_EQ(unscale_gradients(g, st), g);
}

TEST(LossScale, InversePair) {
  LossScaleState st;
  st.scale = 8.0;
  std::vector<double> g{0.125, -3.0, 1e-5};
  std::vector<double> scaled;
  for (double x : g) scaled.push_back(x * 8.0);
  EXPECT_EQ(scale_loss(0.5, st), 4.0);
  EXPECT_EQ(unscale_gradients(scaled, st), g);
}

TEST(LossScale, EightRecoversSmallGradients) {
  Rng rng(8);
  std::vector<double> g(4096);
  for (auto& x : g) x = std::ldexp(rng.uniform(0.5, 1.0), -int(rng.below(8)) - 24);
  EXPECT_GT(representable_count(g, 8.0), representable_count(g, 1.0));
}

TEST(LossScale, DynamicPolicy) {
  LossScaleState st;
  st.scale = 1024.0;
  st.policy = LossScalePolicy::dynamic(2.0, 0.5, 3);
  st.record(true);
  EXPECT_EQ(st.scale, 512.0);
  EXPECT_EQ(st.skipped_batches, 1u);
  st.record(false);
  st.record(false);
  EXPECT_EQ(st.scale, 512.0);
  st.record(false);
  EXPECT_EQ(st.scale, 1024.0);
  st.record(false);
  st.record(true);
  EXPECT_EQ(st.scale, 512.0);
  st.record(false);
  st.record(false);
  EXPECT_EQ(st.scale, 512.0);
}

TEST(LossScale, ConstantPolicyNeverMoves) {
  LossScaleState st;
  st.scale = 8.0;
  for (int i = 0; i < 10; ++i) st.record(i % 3 == 0);
  EXPECT_EQ(st.scale, 8.0);
  EXPECT_EQ(st.skipped_batches, 4u);
}

TEST(MixedUpdate, MasterKeepsTinySteps) {
  // eta * g = 1e-4 is below half's spacing at 1.0 (2^-10).
  const std::vector<Half> w{to_half(1.0).value};
  const std::vector<Half> g{to_half(0.01).value};
  auto pure = pure_half_update(w, g, 0.01);
  EXPECT_EQ(from_half(pure[0]), 1.0);

  std::vector<float> master{1.0f};
  LossScaleState st;
  MixedUpdateOptions o;
  o.eta = 0.01;
  EXPECT_EQ(mixed_update(master, g, st, o), UpdateOutcome::kApplied);
  EXPECT_LT(master[0], 1.0f);
  EXPECT_NEAR(master[0], 1.0 - 0.01 * from_half(g[0]), 1e-7);
}

TEST(MixedUpdate, ZeroGradientNoSkip) {
  std::vector<float> master{0.5f, -2.0f};
  const std::vector<Half> g{to_half(0.0).value, to_half(0.0).value};
  LossScaleState st;
  EXPECT_EQ(mixed_update(master, g, st, {}), UpdateOutcome::kApplied);
  EXPECT_EQ(master, (std::vector<float>{0.5f, -2.0f}));
  EXPECT_EQ(st.skipped_batches, 0u);
}

TEST(MixedUpdate, OverflowSkipsBatch) {
  std::vector<float> master{0.5f, -2.0f};
  const std::vector<Half> g{to_half(1.0).value, to_half(1e6).value};
  LossScaleState st;
  st.scale = 4.0;
  st.policy = LossScalePolicy::dynamic(2.0, 0.5, 10);
  EXPECT_EQ(mixed_update(master, g, st, {}), UpdateOutcome::kSkipped);
  EXPECT_EQ(master, (std::vector<float>{0.5f, -2.0f}));
  EXPECT_EQ(st.skipped_batches, 1u);
  EXPECT_EQ(st.scale, 2.0);
}

TEST(MixedUpdate, UnscalesBeforeClipping) {
  // Scaled gradient (3, 4) * 8; after unscaling its norm is 5 and the clip
  // to 1 must act on that, not on the scaled norm.
  std::vector<float> master{0.0f, 0.0f};
  const std::vector<Half> g{to_half(24.0).value, to_half(32.0).value};
  LossScaleState st;
  st.scale = 8.0;
  MixedUpdateOptions o;
  o.eta = 1.0;
  o.clip_norm = 1.0;
  mixed_update(master, g, st, o);
  EXPECT_NEAR(master[0], -0.6f, 1e-6);
  EXPECT_NEAR(master[1], -0.8f, 1e-6);
}

TEST(Reduce, SingleAccumulatorCountsPastSaturation) {
  std::vector<Half> ones(4096, to_half(1.0).value);
  EXPECT_EQ(reduce_single_precision(ones).sum, 4096.0f);
  EXPECT_EQ(from_half(reduce_single_precision(ones).half.value), 4096.0);
  EXPECT_EQ(from_half(reduce_half_accumulator(ones)), 2048.0);
}

TEST(Reduce, EmptySumIsZero) {
  EXPECT_EQ(reduce_single_precision({}).sum, 0.0f);
  EXPECT_EQ(from_half(reduce_half_accumulator({})), 0.0);
}

TEST(Reduce, SingleAccumulatorUsuallyCloser) {
  Rng rng(31);
  int better_or_equal = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<Half> v(10000);
    double exact = 0.0;
    for (auto& h : v) {
      h = to_half(rng.uniform(0.0, 1.0)).value;
      exact += from_half(h);
    }
    const double single = reduce_single_precision(v).sum;
    const double half = from_half(reduce_half_accumulator(v));
    if (std::abs(single - exact) <= std::abs(half - exact)) ++better_or_equal;
  }
  EXPECT_GE(better_or_equal, trials * 99 / 100);
}

}  // namespace
}  // namespace gradsim::precision
