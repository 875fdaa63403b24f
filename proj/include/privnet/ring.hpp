// Copyright 2026 The privnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>

#include "privnet/common.hpp"

namespace privnet {

// Arithmetic in Z_{2^w} and the fixed-point codec mapping reals onto it.
//
// The ring word is a template parameter so that the production 64-bit ring
// and an exhaustively testable 8-bit ring share one implementation. All
// operations wrap; nothing traps on overflow.

template <typename W>
concept RingWord = std::unsigned_integral<W> && !std::same_as<W, bool>;

template <RingWord W>
inline constexpr int ring_bits_v = std::numeric_limits<W>::digits;

using ring64 = uint64_t;
using ring8 = uint8_t;  // test ring

template <RingWord W>
constexpr W ring_add(W a, W b) {
  return static_cast<W>(a + b);
}

template <RingWord W>
constexpr W ring_sub(W a, W b) {
  return static_cast<W>(a - b);
}

template <RingWord W>
constexpr W ring_mul(W a, W b) {
  return static_cast<W>(a * b);
}

template <RingWord W>
constexpr W ring_neg(W a) {
  return static_cast<W>(W{0} - a);
}

// Two's-complement fixed-point codec: a real x is carried as
// round(x * 2^f) mod 2^64 with f fraction bits. Magnitudes must satisfy
// |x| < 2^k; k + f <= 60 leaves headroom so one product plus truncation
// cannot wrap and bounds the local-truncation failure probability by
// 2^(k+f-63).
struct FixedPointCodec {
  int fraction_bits = 13;   // f
  int magnitude_bits = 20;  // k

  void validate() const {
    if (fraction_bits < 1 || fraction_bits > 30)
      throw invalid_params_error("codec: fraction_bits must be in [1, 30], got " +
                                 std::to_string(fraction_bits));
    if (magnitude_bits < 1)
      throw invalid_params_error("codec: magnitude_bits must be positive");
    if (magnitude_bits + fraction_bits > 60)
      throw invalid_params_error("codec: magnitude_bits + fraction_bits must be <= 60, got " +
                                 std::to_string(magnitude_bits + fraction_bits));
  }

  double scale() const { return std::ldexp(1.0, fraction_bits); }
  // One unit in the last place of the encoding.
  double resolution() const { return std::ldexp(1.0, -fraction_bits); }
  double magnitude_bound() const { return std::ldexp(1.0, magnitude_bits); }
};

// round(x * 2^f) mod 2^64, rounding half away from zero. Negative values
// land on the two's-complement image 2^64 - round(|x| * 2^f).
inline ring64 encode(double x, const FixedPointCodec& codec) {
  codec.validate();
  if (!(std::abs(x) < codec.magnitude_bound()))
    throw encode_overflow_error("encode: |" + std::to_string(x) + "| >= 2^" +
                                std::to_string(codec.magnitude_bits));
  // llround rounds halfway cases away from zero; |x * 2^f| < 2^50 so the
  // scaled value is exactly representable in long long.
  long long scaled = std::llround(x * codec.scale());
  return static_cast<ring64>(scaled);
}

inline double decode(ring64 e, const FixedPointCodec& codec) {
  return std::ldexp(static_cast<double>(static_cast<int64_t>(e)), -codec.fraction_bits);
}

// Rescales after a fixed-point product: interprets e as signed and shifts
// right by f with sign extension. Requires the carried value y to satisfy
// |y| < 2^(k+f) so the signed interpretation is the intended one.
template <RingWord W>
constexpr W truncate_public(W e, const FixedPointCodec& codec) {
  using S = std::make_signed_t<W>;
  return static_cast<W>(static_cast<S>(e) >> codec.fraction_bits);
}

// Sign bit under the two's-complement reading: 1 iff e encodes a negative.
template <RingWord W>
constexpr W ring_msb(W e) {
  return static_cast<W>(e >> (ring_bits_v<W> - 1));
}

}  // namespace privnet
