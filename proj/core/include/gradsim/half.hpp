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

#include <cstdint>
#include <span>
#include <vector>

// Software IEEE-754 binary16. Conversions are bit-exact and independent of
// the host's floating-point environment; rounding is always nearest-even.

namespace gradsim::precision {

struct Half {
  std::uint16_t bits = 0;

  friend constexpr bool operator==(Half, Half) = default;
};

struct HalfConversion {
  Half value;
  bool overflow = false;   // finite input became +-inf
  bool underflow = false;  // nonzero input became +-0
};

inline constexpr double kHalfMax = 65504.0;
inline constexpr double kHalfMinNormal = 0x1.0p-14;
inline constexpr double kHalfMinSubnormal = 0x1.0p-24;
inline constexpr std::uint32_t kHalfFinitePatterns = 63488;

HalfConversion to_half(double x) noexcept;
inline HalfConversion to_half(float x) noexcept {
  return to_half(static_cast<double>(x));
}
double from_half(Half h) noexcept;

// Value after a round trip through binary16.
inline double round_to_half(double x) noexcept {
  return from_half(to_half(x).value);
}

constexpr bool is_finite(Half h) noexcept {
  return (h.bits & 0x7C00u) != 0x7C00u;
}
constexpr bool is_nan(Half h) noexcept {
  return (h.bits & 0x7C00u) == 0x7C00u && (h.bits & 0x03FFu) != 0;
}

std::vector<Half> to_half(std::span<const double> xs);
std::vector<double> from_half(std::span<const Half> hs);

}  // namespace gradsim::precision
