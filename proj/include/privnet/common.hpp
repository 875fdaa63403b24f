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

#include <sodium.h>

#include <array>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace privnet {

// ---------------------------------------------------------------------------
// Error taxonomy. Every failure mode surfaced by the library derives from
// privnet::error so callers can catch one base type at process boundaries.
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-point magnitude outside the codec's range.
class encode_overflow_error : public error {
 public:
  using error::error;
};

// Shares that cannot belong together (duplicate party index, duplicate
// evaluation point, mismatched field).
class malformed_shares_error : public error {
 public:
  using error::error;
};

// Parameter sets violating a documented invariant.
class invalid_params_error : public error {
 public:
  using error::error;
};

// Fewer Shamir shares than the threshold requires.
class insufficient_shares_error : public error {
 public:
  using error::error;
};

// Caller broke a protocol contract (triple reuse, schedule mismatch).
class protocol_misuse_error : public error {
 public:
  using error::error;
};

// The running session was torn down (desync, peer abort, channel failure).
class session_abort_error : public error {
 public:
  using error::error;
};

// Tensor/layer shape violations.
class shape_error : public error {
 public:
  using error::error;
};

// Config files: parse or validation failure.
class config_error : public error {
 public:
  using error::error;
};

// Undecodable input files.
class ingest_error : public error {
 public:
  using error::error;
};

// Filename carries none of the class keywords.
class unlabelable_file_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

inline void sodium_ready() {
  static const int rc = sodium_init();
  if (rc < 0) throw error("libsodium initialization failed");
}

// ---------------------------------------------------------------------------
// Randomness. All random choices in the library flow through an injected
// generator so runs are reproducible per seed.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng{seed}; }

// Anything callable yielding 64-bit words; lets tests enumerate the whole
// randomness space where the default generator would sample it.
template <typename G>
concept UniformBitGenerator = requires(G& g) {
  { g() } -> std::convertible_to<uint64_t>;
};

// Derives an independent stream from a base seed and a label, e.g. one rng
// per session or per epoch. splitmix64 finalizer over the mixed inputs.
inline uint64_t derive_seed(uint64_t base, uint64_t label) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (label + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Little-endian byte helpers (wire payloads, file blobs).
// ---------------------------------------------------------------------------

inline void put_u64_le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint64_t get_u64_le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint32_t get_u32_be(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void put_u64_be(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 7; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint64_t get_u64_be(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

inline void put_f64_le(std::vector<uint8_t>& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64_le(out, bits);
}

inline double get_f64_le(const uint8_t* p) {
  uint64_t bits = get_u64_le(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline std::string to_hex(std::span<const uint8_t> bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

inline std::vector<uint8_t> from_hex(const std::string& s) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2 != 0) throw invalid_params_error("hex string has odd length");
  std::vector<uint8_t> out(s.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    int hi = nib(s[2 * i]), lo = nib(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw invalid_params_error("invalid hex digit in \"" + s + "\"");
    out[i] = static_cast<uint8_t>((hi << 4) | lo);
  }
  return out;
}

}  // namespace privnet
