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

#include "gradsim/half.hpp"

#include <cmath>
#include <limits>

namespace gradsim::precision {
namespace {

// v >= 0 and v < 2^52, so floor/diff are exact.
double round_half_even(double v) {
  const double fl = std::floor(v);
  const double diff = v - fl;
  if (diff > 0.5) return fl + 1.0;
  if (diff < 0.5) return fl;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

}  // namespace

HalfConversion to_half(double x) noexcept {
  HalfConversion out;
  const std::uint16_t sign = std::signbit(x) ? 0x8000u : 0u;
  if (std::isnan(x)) {
    out.value.bits = sign | 0x7E00u;
    return out;
  }
  const double a = std::fabs(x);
  if (std::isinf(a)) {
    out.value.bits = sign | 0x7C00u;
    return out;
  }
  if (a == 0.0) {
    out.value.bits = sign;
    return out;
  }
  if (a < kHalfMinNormal) {
    // Subnormal grid has spacing 2^-24; m == 1024 lands on the smallest
    // normal, which the bit layout encodes for free.
    const double m = round_half_even(std::ldexp(a, 24));
    out.value.bits = sign | static_cast<std::uint16_t>(m);
    out.underflow = (m == 0.0);
    return out;
  }
  int k = 0;
  std::frexp(a, &k);  // a = f * 2^k with f in [0.5, 1)
  int e = k - 1;
  double m = round_half_even(std::ldexp(a, 10 - e));  // in [1024, 2048]
  if (m == 2048.0) {
    m = 1024.0;
    ++e;
  }
  if (e > 15) {
    out.value.bits = sign | 0x7C00u;
    out.overflow = true;
    return out;
  }
  out.value.bits = static_cast<std::uint16_t>(
      sign | ((e + 15) << 10) | (static_cast<int>(m) - 1024));
  return out;
}

double from_half(Half h) noexcept {
  const bool neg = (h.bits & 0x8000u) != 0;
  const int e = (h.bits >> 10) & 0x1F;
  const int m = h.bits & 0x03FF;
  double v;
  if (e == 0) {
    v = std::ldexp(static_cast<double>(m), -24);
  } else if (e == 31) {
    v = m == 0 ? std::numeric_limits<double>::infinity()
               : std::numeric_limits<double>::quiet_NaN();
  } else {
    v = std::ldexp(static_cast<double>(1024 + m), e - 25);
  }
  return neg ? -v : v;
}

std::vector<Half> to_half(std::span<const double> xs) {
  std::vector<Half> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(to_half(x).value);
  return out;
}

std::vector<double> from_half(std::span<const Half> hs) {
  std::vector<double> out;
  out.reserve(hs.size());
  for (Half h : hs) out.push_back(from_half(h));
  return out;
}

}  // namespace gradsim::precision
