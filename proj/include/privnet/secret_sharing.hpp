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

#include <cstdio>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "privnet/common.hpp"
#include "privnet/ring.hpp"

namespace privnet {

// ---------------------------------------------------------------------------
// Additive 2-of-2 sharing over Z_{2^w}: x = x0 + x1 mod 2^w. Each share
// alone is uniform, so a single share reveals nothing about the secret.
// ---------------------------------------------------------------------------

template <RingWord W>
struct AdditiveShare {
  int party = 0;  // 0 or 1
  W value = 0;
};

template <RingWord W, UniformBitGenerator G>
std::pair<AdditiveShare<W>, AdditiveShare<W>> additive_share(W secret, G& rng) {
  W x0 = static_cast<W>(rng());
  return {AdditiveShare<W>{0, x0}, AdditiveShare<W>{1, ring_sub(secret, x0)}};
}

template <RingWord W>
W additive_reconstruct(const AdditiveShare<W>& s0, const AdditiveShare<W>& s1) {
  if (s0.party == s1.party)
    throw malformed_shares_error("additive_reconstruct: both shares claim party " +
                                 std::to_string(s0.party));
  if ((s0.party != 0 && s0.party != 1) || (s1.party != 0 && s1.party != 1))
    throw malformed_shares_error("additive_reconstruct: party index outside {0, 1}");
  return ring_add(s0.value, s1.value);
}

// Vector forms used by the tensor paths; party bookkeeping is the caller's.
template <RingWord W, UniformBitGenerator G>
std::pair<std::vector<W>, std::vector<W>> additive_share_vec(std::span<const W> secrets, G& rng) {
  std::vector<W> s0(secrets.size()), s1(secrets.size());
  for (size_t i = 0; i < secrets.size(); ++i) {
    s0[i] = static_cast<W>(rng());
    s1[i] = ring_sub(secrets[i], s0[i]);
  }
  return {std::move(s0), std::move(s1)};
}

template <RingWord W>
std::vector<W> additive_reconstruct_vec(std::span<const W> s0, std::span<const W> s1) {
  if (s0.size() != s1.size())
    throw malformed_shares_error("additive_reconstruct_vec: length mismatch");
  std::vector<W> out(s0.size());
  for (size_t i = 0; i < s0.size(); ++i) out[i] = ring_add(s0[i], s1[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Shamir (t, n) sharing over a prime field: the secret is the constant term
// of a random degree-t polynomial, share i is the evaluation at x = i.
// ---------------------------------------------------------------------------

// Default production field; 257 is the exhaustive-test field.
inline constexpr uint64_t kMersenne61 = (uint64_t{1} << 61) - 1;

struct ShamirParams {
  uint64_t threshold = 1;    // t: polynomial degree; t+1 shares reconstruct
  uint64_t share_count = 3;  // n
  uint64_t prime = kMersenne61;

  void validate() const {
    if (!(threshold < share_count))
      throw invalid_params_error("shamir: need t < n");
    if (!(share_count < prime))
      throw invalid_params_error("shamir: need n < p");
  }
};

struct ShamirShare {
  uint64_t x = 0;  // evaluation point, nonzero
  uint64_t y = 0;
  uint64_t prime = kMersenne61;
};

namespace field {

inline uint64_t add(uint64_t a, uint64_t b, uint64_t p) {
  uint64_t s = a + b;  // p < 2^62 so no overflow
  return s >= p ? s - p : s;
}

inline uint64_t sub(uint64_t a, uint64_t b, uint64_t p) { return a >= b ? a - b : a + p - b; }

inline uint64_t mul(uint64_t a, uint64_t b, uint64_t p) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % p);
}

inline uint64_t pow(uint64_t base, uint64_t exp, uint64_t p) {
  uint64_t acc = 1 % p;
  base %= p;
  while (exp > 0) {
    if (exp & 1) acc = mul(acc, base, p);
    base = mul(base, base, p);
    exp >>= 1;
  }
  return acc;
}

// Fermat inverse; p must be prime and a nonzero mod p.
inline uint64_t inv(uint64_t a, uint64_t p) {
  if (a % p == 0) throw invalid_params_error("field: inverse of zero");
  return pow(a, p - 2, p);
}

template <UniformBitGenerator G>
uint64_t uniform(uint64_t p, G& rng) {
  // Rejection sampling keeps the draw exactly uniform on [0, p).
  uint64_t bound = std::numeric_limits<uint64_t>::max() -
                   (std::numeric_limits<uint64_t>::max() % p + 1) % p;
  uint64_t v;
  do {
    v = rng();
  } while (v > bound && bound != std::numeric_limits<uint64_t>::max());
  return v % p;
}

}  // namespace field

template <UniformBitGenerator G>
std::vector<ShamirShare> shamir_share(uint64_t secret, const ShamirParams& params, G& rng) {
  params.validate();
  if (secret >= params.prime)
    throw invalid_params_error("shamir_share: secret must be < p");
  // coeffs[0] = secret, coeffs[1..t] uniform.
  std::vector<uint64_t> coeffs(params.threshold + 1);
  coeffs[0] = secret;
  for (uint64_t i = 1; i <= params.threshold; ++i) coeffs[i] = field::uniform(params.prime, rng);
  std::vector<ShamirShare> shares;
  shares.reserve(params.share_count);
  for (uint64_t i = 1; i <= params.share_count; ++i) {
    // Horner evaluation at x = i.
    uint64_t y = 0;
    for (size_t j = coeffs.size(); j-- > 0;) y = field::add(field::mul(y, i, params.prime), coeffs[j], params.prime);
    shares.push_back(ShamirShare{i, y, params.prime});
  }
  return shares;
}

// Lagrange interpolation at x = 0 over the first t+1 of the given shares.
// All shares are checked for distinct evaluation points first, so the result
// is independent of which t+1 subset the caller passes.
inline uint64_t shamir_reconstruct(std::span<const ShamirShare> shares,
                                   const ShamirParams& params) {
  params.validate();
  if (shares.size() < params.threshold + 1)
    throw insufficient_shares_error("shamir_reconstruct: got " + std::to_string(shares.size()) +
                                    " shares, need " + std::to_string(params.threshold + 1));
  for (size_t i = 0; i < shares.size(); ++i) {
    if (shares[i].prime != params.prime)
      throw malformed_shares_error("shamir_reconstruct: share field mismatch");
    if (shares[i].x == 0 || shares[i].x >= params.prime)
      throw malformed_shares_error("shamir_reconstruct: evaluation point out of range");
    for (size_t j = 0; j < i; ++j)
      if (shares[i].x == shares[j].x)
        throw malformed_shares_error("shamir_reconstruct: duplicate evaluation point " +
                                     std::to_string(shares[i].x));
  }
  const uint64_t p = params.prime;
  const size_t m = params.threshold + 1;
  uint64_t acc = 0;
  for (size_t i = 0; i < m; ++i) {
    uint64_t num = 1, den = 1;
    for (size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      num = field::mul(num, shares[j].x % p, p);
      den = field::mul(den, field::sub(shares[j].x % p, shares[i].x % p, p), p);
    }
    uint64_t li = field::mul(num, field::inv(den, p), p);
    acc = field::add(acc, field::mul(shares[i].y, li, p), p);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Share vault file: one party's shares of a set of named tensors.
//
// Layout (bit-exact):
//   line "PRIVNET-SHARES v1\n"
//   per record:
//     line "tensor <name> party <P> shape <d0>[x<d1>...] count <N>\n"
//     N * 8 bytes: the share words, little-endian uint64, row-major.
// Names must be non-empty and contain no whitespace.
// ---------------------------------------------------------------------------

struct VaultRecord {
  std::string name;
  std::vector<size_t> shape;
  int party = 0;
  std::vector<uint64_t> values;
};

namespace detail {

inline std::string shape_to_string(const std::vector<size_t>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

inline std::vector<size_t> shape_from_string(const std::string& s) {
  std::vector<size_t> shape;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t next = s.find('x', pos);
    if (next == std::string::npos) next = s.size();
    shape.push_back(std::stoull(s.substr(pos, next - pos)));
    pos = next + 1;
  }
  return shape;
}

}  // namespace detail

inline void vault_write(const std::filesystem::path& path, std::span<const VaultRecord> records) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw io_error("vault_write: cannot open " + path.string());
  auto emit = [&](const std::string& s) {
    if (std::fwrite(s.data(), 1, s.size(), f) != s.size()) {
      std::fclose(f);
      throw io_error("vault_write: short write to " + path.string());
    }
  };
  emit("PRIVNET-SHARES v1\n");
  for (const auto& r : records) {
    if (r.name.empty() || r.name.find_first_of(" \t\n") != std::string::npos)
      throw invalid_params_error("vault_write: bad tensor name \"" + r.name + "\"");
    size_t numel = 1;
    for (size_t d : r.shape) numel *= d;
    if (numel != r.values.size())
      throw invalid_params_error("vault_write: shape/count mismatch for " + r.name);
    emit("tensor " + r.name + " party " + std::to_string(r.party) + " shape " +
         detail::shape_to_string(r.shape) + " count " + std::to_string(r.values.size()) + "\n");
    std::vector<uint8_t> blob;
    blob.reserve(r.values.size() * 8);
    for (uint64_t v : r.values) put_u64_le(blob, v);
    if (!blob.empty() && std::fwrite(blob.data(), 1, blob.size(), f) != blob.size()) {
      std::fclose(f);
      throw io_error("vault_write: short write to " + path.string());
    }
  }
  std::fclose(f);
}

inline std::vector<VaultRecord> vault_read(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw io_error("vault_read: cannot open " + path.string());
  auto read_line = [&](std::string& line) -> bool {
    line.clear();
    int c;
    while ((c = std::fgetc(f)) != EOF) {
      if (c == '\n') return true;
      line.push_back(static_cast<char>(c));
    }
    return !line.empty();
  };
  std::string line;
  if (!read_line(line) || line != "PRIVNET-SHARES v1") {
    std::fclose(f);
    throw io_error("vault_read: " + path.string() + " is not a v1 share vault");
  }
  std::vector<VaultRecord> records;
  while (read_line(line)) {
    char name[256];
    int party = 0;
    char shape[256];
    unsigned long long count = 0;
    if (std::sscanf(line.c_str(), "tensor %255s party %d shape %255s count %llu", name, &party,
                    shape, &count) != 4) {
      std::fclose(f);
      throw io_error("vault_read: malformed record header \"" + line + "\"");
    }
    VaultRecord r;
    r.name = name;
    r.party = party;
    r.shape = detail::shape_from_string(shape);
    size_t numel = 1;
    for (size_t d : r.shape) numel *= d;
    if (numel != count) {
      std::fclose(f);
      throw io_error("vault_read: shape/count mismatch for " + r.name);
    }
    std::vector<uint8_t> blob(count * 8);
    if (count > 0 && std::fread(blob.data(), 1, blob.size(), f) != blob.size()) {
      std::fclose(f);
      throw io_error("vault_read: truncated share blob for " + r.name);
    }
    r.values.resize(count);
    for (size_t i = 0; i < count; ++i) r.values[i] = get_u64_le(blob.data() + 8 * i);
    records.push_back(std::move(r));
  }
  std::fclose(f);
  return records;
}

}  // namespace privnet
