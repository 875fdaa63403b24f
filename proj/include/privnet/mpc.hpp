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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "privnet/common.hpp"
#include "privnet/ring.hpp"
#include "privnet/secret_sharing.hpp"
#include "privnet/wire.hpp"

namespace privnet {

// Semi-honest 3-party protocols. P0 and P1 compute on additive shares; P2 is
// a helper that deals correlated randomness (Beaver triples) and holds no
// inputs or outputs. One corrupted party learns nothing: every element a
// compute party receives is either a fresh uniform share or a one-time-pad
// style Beaver opening.

// The engine supports exactly one adversary setting; anything else is
// rejected when a deployment config is loaded.
struct AdversaryConfig {
  std::string behavior = "semi-honest";
  std::string corruption = "static";
  int max_corrupted = 1;

  void validate() const {
    if (behavior != "semi-honest")
      throw config_error("unsupported adversary_behavior \"" + behavior +
                         "\" (only semi-honest is implemented)");
    if (corruption != "static")
      throw config_error("unsupported adversary_corruption \"" + corruption +
                         "\" (only static is implemented)");
    if (max_corrupted != 1)
      throw config_error("unsupported adversary_max_corrupted " + std::to_string(max_corrupted) +
                         " (this engine tolerates exactly one corruption)");
  }
};

// ---------------------------------------------------------------------------
// Packed bit vectors: one logical bit per element, 64 elements per word.
// XOR-shared bit strings are two of these, one per compute party.
// ---------------------------------------------------------------------------

struct PackedBits {
  size_t count = 0;
  std::vector<uint64_t> words;

  PackedBits() = default;
  explicit PackedBits(size_t n) : count(n), words((n + 63) / 64, 0) {}

  int get(size_t i) const { return static_cast<int>((words[i >> 6] >> (i & 63)) & 1); }

  void set(size_t i, int b) {
    uint64_t mask = uint64_t{1} << (i & 63);
    if (b)
      words[i >> 6] |= mask;
    else
      words[i >> 6] &= ~mask;
  }

  void mask_tail() {
    if (count % 64 != 0 && !words.empty())
      words.back() &= (uint64_t{1} << (count % 64)) - 1;
  }
};

inline PackedBits operator^(const PackedBits& a, const PackedBits& b) {
  PackedBits out(a.count);
  for (size_t i = 0; i < out.words.size(); ++i) out.words[i] = a.words[i] ^ b.words[i];
  return out;
}

inline PackedBits operator&(const PackedBits& a, const PackedBits& b) {
  PackedBits out(a.count);
  for (size_t i = 0; i < out.words.size(); ++i) out.words[i] = a.words[i] & b.words[i];
  return out;
}

// ---------------------------------------------------------------------------
// Correlated randomness. Each struct holds ONE party's halves; the dealer
// generates matching pairs. A triple is single-use: the engine rejects any
// attempt to consume it twice.
// ---------------------------------------------------------------------------

// Elementwise c[i] = a[i] * b[i] in the ring.
template <RingWord W>
struct MulTriples {
  std::vector<W> a, b, c;
  bool used = false;
  size_t size() const { return a.size(); }
};

// Matrix triple: C = A * B with A m-by-k, B k-by-n, C m-by-n, row-major.
template <RingWord W>
struct MatmulTriple {
  size_t m = 0, k = 0, n = 0;
  std::vector<W> a, b, c;
  bool used = false;
};

// XOR-shared bit triples: c = a AND b.
struct BitTriples {
  PackedBits a, b, c;
  bool used = false;
  size_t size() const { return a.count; }
};

template <RingWord W>
std::pair<MulTriples<W>, MulTriples<W>> deal_muls(size_t count, Rng& rng) {
  MulTriples<W> h0, h1;
  h0.a.resize(count);
  h0.b.resize(count);
  h0.c.resize(count);
  h1 = h0;
  for (size_t i = 0; i < count; ++i) {
    W a = static_cast<W>(rng()), b = static_cast<W>(rng());
    W c = ring_mul(a, b);
    h0.a[i] = static_cast<W>(rng());
    h1.a[i] = ring_sub(a, h0.a[i]);
    h0.b[i] = static_cast<W>(rng());
    h1.b[i] = ring_sub(b, h0.b[i]);
    h0.c[i] = static_cast<W>(rng());
    h1.c[i] = ring_sub(c, h0.c[i]);
  }
  return {std::move(h0), std::move(h1)};
}

template <RingWord W>
std::vector<W> ring_matmul(std::span<const W> a, std::span<const W> b, size_t m, size_t k,
                           size_t n) {
  if (a.size() != m * k || b.size() != k * n) throw shape_error("ring_matmul: dimension mismatch");
  std::vector<W> c(m * n, W{0});
  for (size_t i = 0; i < m; ++i)
    for (size_t t = 0; t < k; ++t) {
      W ait = a[i * k + t];
      if (ait == 0) continue;
      const W* brow = b.data() + t * n;
      W* crow = c.data() + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] = ring_add(crow[j], ring_mul(ait, brow[j]));
    }
  return c;
}

template <RingWord W>
std::pair<MatmulTriple<W>, MatmulTriple<W>> deal_matmul(size_t m, size_t k, size_t n, Rng& rng) {
  std::vector<W> a(m * k), b(k * n);
  for (auto& v : a) v = static_cast<W>(rng());
  for (auto& v : b) v = static_cast<W>(rng());
  std::vector<W> c = ring_matmul<W>(a, b, m, k, n);
  MatmulTriple<W> h0, h1;
  h0.m = h1.m = m;
  h0.k = h1.k = k;
  h0.n = h1.n = n;
  auto split = [&rng](const std::vector<W>& full, std::vector<W>& s0, std::vector<W>& s1) {
    s0.resize(full.size());
    s1.resize(full.size());
    for (size_t i = 0; i < full.size(); ++i) {
      s0[i] = static_cast<W>(rng());
      s1[i] = ring_sub(full[i], s0[i]);
    }
  };
  split(a, h0.a, h1.a);
  split(b, h0.b, h1.b);
  split(c, h0.c, h1.c);
  return {std::move(h0), std::move(h1)};
}

inline std::pair<BitTriples, BitTriples> deal_bits(size_t count, Rng& rng) {
  auto random_bits = [&rng, count]() {
    PackedBits p(count);
    for (auto& w : p.words) w = rng();
    p.mask_tail();
    return p;
  };
  PackedBits a = random_bits(), b = random_bits();
  PackedBits c = a & b;
  BitTriples h0, h1;
  h0.a = random_bits();
  h1.a = a ^ h0.a;
  h0.b = random_bits();
  h1.b = b ^ h0.b;
  h0.c = random_bits();
  h1.c = c ^ h0.c;
  return {std::move(h0), std::move(h1)};
}

// ---------------------------------------------------------------------------
// Triple provisioning. P2 derives the demand schedule from the public model
// graph and streams TRIPLE_DELIVERY frames; the consuming side checks every
// delivery against what the protocol actually asks for, so any schedule
// drift aborts loudly instead of corrupting results.
// ---------------------------------------------------------------------------

struct TripleNeed {
  enum class Kind : uint64_t { kMatmul = 1, kMuls = 2, kBits = 3 };
  Kind kind = Kind::kMuls;
  size_t m = 0, k = 0, n = 0;  // matmul dims
  size_t count = 0;            // muls / bits

  bool operator==(const TripleNeed&) const = default;

  static TripleNeed matmul(size_t m, size_t k, size_t n) {
    return TripleNeed{Kind::kMatmul, m, k, n, 0};
  }
  static TripleNeed muls(size_t count) { return TripleNeed{Kind::kMuls, 0, 0, 0, count}; }
  static TripleNeed bits(size_t count) { return TripleNeed{Kind::kBits, 0, 0, 0, count}; }
};

// Needs of one secure_msb call over n elements in ring width `bits`:
// bits-1 carry AND rounds plus one arithmetic triple batch for the
// bit-to-arithmetic conversion.
inline void append_msb_needs(std::vector<TripleNeed>& needs, size_t n, int bits) {
  for (int j = 0; j < bits - 1; ++j) needs.push_back(TripleNeed::bits(n));
  needs.push_back(TripleNeed::muls(n));
}

inline void append_relu_needs(std::vector<TripleNeed>& needs, size_t n, int bits) {
  append_msb_needs(needs, n, bits);
  needs.push_back(TripleNeed::muls(n));
}

inline void append_max_windows_needs(std::vector<TripleNeed>& needs, size_t n_windows,
                                     size_t window, int bits) {
  size_t len = window;
  while (len > 1) {
    size_t pairs = len / 2;
    append_relu_needs(needs, pairs * n_windows, bits);
    len = pairs + (len % 2);
  }
}

template <RingWord W>
class TripleSource {
 public:
  virtual ~TripleSource() = default;
  virtual MatmulTriple<W> matmul(size_t m, size_t k, size_t n) = 0;
  virtual MulTriples<W> muls(size_t count) = 0;
  virtual BitTriples bits(size_t count) = 0;
};

namespace detail {

template <RingWord W>
std::vector<uint8_t> encode_matmul_half(const MatmulTriple<W>& t) {
  std::vector<uint8_t> out;
  put_u64_le(out, static_cast<uint64_t>(TripleNeed::Kind::kMatmul));
  put_u64_le(out, t.m);
  put_u64_le(out, t.k);
  put_u64_le(out, t.n);
  put_u64_le(out, 0);
  put_words<W>(out, t.a);
  put_words<W>(out, t.b);
  put_words<W>(out, t.c);
  return out;
}

template <RingWord W>
std::vector<uint8_t> encode_muls_half(const MulTriples<W>& t) {
  std::vector<uint8_t> out;
  put_u64_le(out, static_cast<uint64_t>(TripleNeed::Kind::kMuls));
  put_u64_le(out, 0);
  put_u64_le(out, 0);
  put_u64_le(out, 0);
  put_u64_le(out, t.size());
  put_words<W>(out, t.a);
  put_words<W>(out, t.b);
  put_words<W>(out, t.c);
  return out;
}

inline std::vector<uint8_t> encode_bits_half(const BitTriples& t) {
  std::vector<uint8_t> out;
  put_u64_le(out, static_cast<uint64_t>(TripleNeed::Kind::kBits));
  put_u64_le(out, 0);
  put_u64_le(out, 0);
  put_u64_le(out, 0);
  put_u64_le(out, t.size());
  put_words<uint64_t>(out, t.a.words);
  put_words<uint64_t>(out, t.b.words);
  put_words<uint64_t>(out, t.c.words);
  return out;
}

struct DeliveryHeader {
  TripleNeed::Kind kind;
  uint64_t m, k, n, count;
};

inline DeliveryHeader parse_delivery_header(std::span<const uint8_t> payload) {
  if (payload.size() < 40) throw session_abort_error("TRIPLE_DELIVERY payload too short");
  DeliveryHeader h;
  h.kind = static_cast<TripleNeed::Kind>(get_u64_le(payload.data()));
  h.m = get_u64_le(payload.data() + 8);
  h.k = get_u64_le(payload.data() + 16);
  h.n = get_u64_le(payload.data() + 24);
  h.count = get_u64_le(payload.data() + 32);
  return h;
}

}  // namespace detail

// Runs on P2: generates one need's triples and delivers the halves.
template <RingWord W>
void dealer_send_need(Channel& to_p0, Channel& to_p1, const TripleNeed& need, Rng& rng) {
  switch (need.kind) {
    case TripleNeed::Kind::kMatmul: {
      auto [h0, h1] = deal_matmul<W>(need.m, need.k, need.n, rng);
      to_p0.send(MsgType::kTripleDelivery, detail::encode_matmul_half(h0));
      to_p1.send(MsgType::kTripleDelivery, detail::encode_matmul_half(h1));
      break;
    }
    case TripleNeed::Kind::kMuls: {
      auto [h0, h1] = deal_muls<W>(need.count, rng);
      to_p0.send(MsgType::kTripleDelivery, detail::encode_muls_half(h0));
      to_p1.send(MsgType::kTripleDelivery, detail::encode_muls_half(h1));
      break;
    }
    case TripleNeed::Kind::kBits: {
      auto [h0, h1] = deal_bits(need.count, rng);
      to_p0.send(MsgType::kTripleDelivery, detail::encode_bits_half(h0));
      to_p1.send(MsgType::kTripleDelivery, detail::encode_bits_half(h1));
      break;
    }
  }
}

// P2's whole session: walk the schedule, stream deliveries, exit.
template <RingWord W>
void run_dealer(Channel& to_p0, Channel& to_p1, std::span<const TripleNeed> needs, Rng& rng) {
  for (const TripleNeed& need : needs) dealer_send_need<W>(to_p0, to_p1, need, rng);
}

// Consumes TRIPLE_DELIVERY frames from the dealer channel, enforcing that
// what arrives is exactly what the protocol asked for.
template <RingWord W>
class DealerFedSource final : public TripleSource<W> {
 public:
  explicit DealerFedSource(Channel* dealer) : dealer_(dealer) {}

  MatmulTriple<W> matmul(size_t m, size_t k, size_t n) override {
    auto [h, body] = next(TripleNeed::Kind::kMatmul);
    if (h.m != m || h.k != k || h.n != n)
      throw protocol_misuse_error("triple schedule mismatch: dealer sent matmul " +
                                  std::to_string(h.m) + "x" + std::to_string(h.k) + "x" +
                                  std::to_string(h.n) + ", protocol needs " + std::to_string(m) +
                                  "x" + std::to_string(k) + "x" + std::to_string(n));
    MatmulTriple<W> t;
    t.m = m;
    t.k = k;
    t.n = n;
    auto words = get_words<W>(body);
    size_t asz = m * k, bsz = k * n, csz = m * n;
    if (words.size() != asz + bsz + csz)
      throw session_abort_error("matmul triple delivery has wrong size");
    t.a.assign(words.begin(), words.begin() + asz);
    t.b.assign(words.begin() + asz, words.begin() + asz + bsz);
    t.c.assign(words.begin() + asz + bsz, words.end());
    return t;
  }

  MulTriples<W> muls(size_t count) override {
    auto [h, body] = next(TripleNeed::Kind::kMuls);
    if (h.count != count)
      throw protocol_misuse_error("triple schedule mismatch: dealer sent " +
                                  std::to_string(h.count) + " muls, protocol needs " +
                                  std::to_string(count));
    auto words = get_words<W>(body);
    if (words.size() != 3 * count) throw session_abort_error("mul triple delivery has wrong size");
    MulTriples<W> t;
    t.a.assign(words.begin(), words.begin() + count);
    t.b.assign(words.begin() + count, words.begin() + 2 * count);
    t.c.assign(words.begin() + 2 * count, words.end());
    return t;
  }

  BitTriples bits(size_t count) override {
    auto [h, body] = next(TripleNeed::Kind::kBits);
    if (h.count != count)
      throw protocol_misuse_error("triple schedule mismatch: dealer sent " +
                                  std::to_string(h.count) + " bit triples, protocol needs " +
                                  std::to_string(count));
    auto words = get_words<uint64_t>(body);
    size_t nw = (count + 63) / 64;
    if (words.size() != 3 * nw) throw session_abort_error("bit triple delivery has wrong size");
    BitTriples t;
    t.a.count = t.b.count = t.c.count = count;
    t.a.words.assign(words.begin(), words.begin() + nw);
    t.b.words.assign(words.begin() + nw, words.begin() + 2 * nw);
    t.c.words.assign(words.begin() + 2 * nw, words.end());
    return t;
  }

 private:
  std::pair<detail::DeliveryHeader, std::vector<uint8_t>> next(TripleNeed::Kind want) {
    Frame f = dealer_->expect(MsgType::kTripleDelivery);
    auto h = detail::parse_delivery_header(f.payload);
    if (h.kind != want)
      throw protocol_misuse_error("triple schedule mismatch: delivery kind differs from need");
    std::vector<uint8_t> body(f.payload.begin() + 40, f.payload.end());
    return {h, std::move(body)};
  }

  Channel* dealer_;
};

// Both compute parties derive the same correlated randomness from a shared
// seed instead of talking to a dealer. Test harness / single-process use
// only: a seed known to both parties offers no secrecy.
template <RingWord W>
class SeededTripleSource final : public TripleSource<W> {
 public:
  SeededTripleSource(int party, uint64_t seed) : party_(party), rng_(seed) {}

  MatmulTriple<W> matmul(size_t m, size_t k, size_t n) override {
    auto [h0, h1] = deal_matmul<W>(m, k, n, rng_);
    return party_ == 0 ? std::move(h0) : std::move(h1);
  }
  MulTriples<W> muls(size_t count) override {
    auto [h0, h1] = deal_muls<W>(count, rng_);
    return party_ == 0 ? std::move(h0) : std::move(h1);
  }
  BitTriples bits(size_t count) override {
    auto [h0, h1] = deal_bits(count, rng_);
    return party_ == 0 ? std::move(h0) : std::move(h1);
  }

 private:
  int party_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Party context: everything one compute party needs to run protocols within
// one session. Exactly one context per (party, session); a session is
// single-threaded on each party.
// ---------------------------------------------------------------------------

template <RingWord W>
struct PartyContext {
  int party = 0;                        // 0 or 1; the dealer (2) runs run_dealer instead
  Channel* peer = nullptr;              // other compute party
  Channel* dealer = nullptr;            // P2, when triples are streamed
  TripleSource<W>* triples = nullptr;   // may be null when triples are passed explicitly
  FixedPointCodec codec{};

  void require_triples() const {
    if (!triples) throw protocol_misuse_error("operation needs a triple source");
  }
};

// ---------------------------------------------------------------------------
// Protocols. All openings are exchanged in a single round: both parties send
// before either receives.
// ---------------------------------------------------------------------------

// Beaver multiplication, elementwise over vectors. Opens d = x - a and
// e = y - b; z_i = c_i + d*b_i + e*a_i (+ d*e on party 0).
template <RingWord W>
std::vector<W> secure_mul_vec(PartyContext<W>& ctx, std::span<const W> x, std::span<const W> y,
                              MulTriples<W>& triple) {
  const size_t n = x.size();
  if (y.size() != n) throw shape_error("secure_mul: operand length mismatch");
  if (triple.used) throw protocol_misuse_error("secure_mul: triple already consumed");
  if (triple.size() != n) throw protocol_misuse_error("secure_mul: triple size mismatch");
  triple.used = true;

  std::vector<W> open(2 * n);
  for (size_t i = 0; i < n; ++i) {
    open[i] = ring_sub(x[i], triple.a[i]);
    open[n + i] = ring_sub(y[i], triple.b[i]);
  }
  std::vector<uint8_t> payload;
  put_words<W>(payload, open);
  ctx.peer->send(MsgType::kBeaverOpen, std::move(payload));
  Frame f = ctx.peer->expect(MsgType::kBeaverOpen);
  auto theirs = get_words<W>(f.payload);
  if (theirs.size() != 2 * n) throw session_abort_error("secure_mul: bad opening size");

  std::vector<W> z(n);
  for (size_t i = 0; i < n; ++i) {
    W d = ring_add(open[i], theirs[i]);
    W e = ring_add(open[n + i], theirs[n + i]);
    W zi = ring_add(triple.c[i], ring_add(ring_mul(d, triple.b[i]), ring_mul(e, triple.a[i])));
    if (ctx.party == 0) zi = ring_add(zi, ring_mul(d, e));
    z[i] = zi;
  }
  return z;
}

template <RingWord W>
W secure_mul(PartyContext<W>& ctx, W x, W y, MulTriples<W>& triple) {
  std::array<W, 1> xs{x}, ys{y};
  return secure_mul_vec<W>(ctx, xs, ys, triple)[0];
}

// Beaver lifted to matrices: Z = C + D*B_i + A_i*E (+ D*E on party 0) with
// D = X - A and E = Y - B opened.
template <RingWord W>
std::vector<W> secure_matmul(PartyContext<W>& ctx, std::span<const W> x, std::span<const W> y,
                             size_t m, size_t k, size_t n, MatmulTriple<W>& triple) {
  if (x.size() != m * k || y.size() != k * n)
    throw shape_error("secure_matmul: operand shape mismatch");
  if (triple.used) throw protocol_misuse_error("secure_matmul: triple already consumed");
  if (triple.m != m || triple.k != k || triple.n != n)
    throw protocol_misuse_error("secure_matmul: triple shape mismatch");
  triple.used = true;

  std::vector<W> open(m * k + k * n);
  for (size_t i = 0; i < m * k; ++i) open[i] = ring_sub(x[i], triple.a[i]);
  for (size_t i = 0; i < k * n; ++i) open[m * k + i] = ring_sub(y[i], triple.b[i]);
  std::vector<uint8_t> payload;
  put_words<W>(payload, open);
  ctx.peer->send(MsgType::kBeaverOpen, std::move(payload));
  Frame f = ctx.peer->expect(MsgType::kBeaverOpen);
  auto theirs = get_words<W>(f.payload);
  if (theirs.size() != open.size()) throw session_abort_error("secure_matmul: bad opening size");

  std::vector<W> d(m * k), e(k * n);
  for (size_t i = 0; i < m * k; ++i) d[i] = ring_add(open[i], theirs[i]);
  for (size_t i = 0; i < k * n; ++i) e[i] = ring_add(open[m * k + i], theirs[m * k + i]);

  std::vector<W> z = ring_matmul<W>(d, triple.b, m, k, n);
  std::vector<W> ae = ring_matmul<W>(triple.a, e, m, k, n);
  for (size_t i = 0; i < m * n; ++i) z[i] = ring_add(ring_add(z[i], ae[i]), triple.c[i]);
  if (ctx.party == 0) {
    std::vector<W> de = ring_matmul<W>(d, e, m, k, n);
    for (size_t i = 0; i < m * n; ++i) z[i] = ring_add(z[i], de[i]);
  }
  return z;
}

// Local probabilistic truncation after a fixed-point product. P0 shifts its
// share arithmetically; P1 shifts the negation. Off by at most one unit in
// the last place except with probability <= 2^(k+f-63) when the carried
// value respects the codec headroom.
template <RingWord W>
void truncate_shares(int party, std::span<W> values, const FixedPointCodec& codec) {
  using S = std::make_signed_t<W>;
  const int f = codec.fraction_bits;
  if (party == 0)
    for (W& v : values) v = static_cast<W>(static_cast<S>(v) >> f);
  else
    for (W& v : values) v = ring_neg(static_cast<W>(static_cast<S>(ring_neg(v)) >> f));
}

// Boolean Beaver AND over packed XOR-shared bit vectors.
inline PackedBits secure_and(int party, Channel& peer, const PackedBits& x, const PackedBits& y,
                             BitTriples& triple) {
  const size_t n = x.count;
  if (y.count != n) throw shape_error("secure_and: operand length mismatch");
  if (triple.used) throw protocol_misuse_error("secure_and: bit triple already consumed");
  if (triple.size() != n) throw protocol_misuse_error("secure_and: triple size mismatch");
  triple.used = true;

  PackedBits d = x ^ triple.a;
  PackedBits e = y ^ triple.b;
  std::vector<uint8_t> payload;
  put_words<uint64_t>(payload, d.words);
  put_words<uint64_t>(payload, e.words);
  peer.send(MsgType::kBitOpen, std::move(payload));
  Frame f = peer.expect(MsgType::kBitOpen);
  auto theirs = get_words<uint64_t>(f.payload);
  if (theirs.size() != 2 * d.words.size()) throw session_abort_error("secure_and: bad opening");
  for (size_t i = 0; i < d.words.size(); ++i) {
    d.words[i] ^= theirs[i];
    e.words[i] ^= theirs[d.words.size() + i];
  }
  PackedBits z = triple.c ^ (d & triple.b) ^ (e & triple.a);
  if (party == 0) {
    PackedBits de = d & e;
    for (size_t i = 0; i < z.words.size(); ++i) z.words[i] ^= de.words[i];
  }
  return z;
}

// Arithmetic sharing of the sign bit of each element. Both parties bit-
// decompose their own additive share locally; a ripple-carry adder over
// XOR-shares (one AND per carry position) produces the top bit of the sum,
// which equals the top bit of the secret because the mod-2^w wraparound
// discards exactly the carry out. The XOR-shared result is converted to an
// arithmetic sharing via b = b0 + b1 - 2*b0*b1 with one Beaver triple.
template <RingWord W>
std::vector<W> secure_msb_vec(PartyContext<W>& ctx, std::span<const W> x) {
  const size_t n = x.size();
  const int bits = ring_bits_v<W>;
  ctx.require_triples();
  if (n == 0) return {};

  // carry into position j, XOR-shared; starts at zero
  PackedBits carry(n);
  for (int j = 0; j < bits - 1; ++j) {
    // u_j: P0's share bit (XOR-share held entirely by P0); v_j: P1's.
    // carry recurrence c' = u ^ ((u^v) & (u^c)) = majority(u, v, c).
    PackedBits p(n), t(n);
    for (size_t e = 0; e < n; ++e) {
      int xb = static_cast<int>((x[e] >> j) & 1);
      p.set(e, xb);  // share of u^v is each party's own bit
      int ub = ctx.party == 0 ? xb : 0;
      t.set(e, ub ^ carry.get(e));
    }
    BitTriples bt = ctx.triples->bits(n);
    PackedBits g = secure_and(ctx.party, *ctx.peer, p, t, bt);
    for (size_t e = 0; e < n; ++e) {
      int ub = ctx.party == 0 ? static_cast<int>((x[e] >> j) & 1) : 0;
      carry.set(e, ub ^ g.get(e));
    }
  }

  // XOR-share of the sign bit, then bit-to-arithmetic conversion.
  std::vector<W> mine(n), lhs(n), rhs(n);
  for (size_t e = 0; e < n; ++e) {
    W b = static_cast<W>(((x[e] >> (bits - 1)) & 1) ^ static_cast<W>(carry.get(e)));
    mine[e] = b;
    lhs[e] = ctx.party == 0 ? b : W{0};
    rhs[e] = ctx.party == 1 ? b : W{0};
  }
  MulTriples<W> mt = ctx.triples->muls(n);
  std::vector<W> prod = secure_mul_vec<W>(ctx, lhs, rhs, mt);
  std::vector<W> out(n);
  for (size_t e = 0; e < n; ++e) out[e] = ring_sub(mine[e], ring_mul(W{2}, prod[e]));
  return out;
}

template <RingWord W>
W secure_msb(PartyContext<W>& ctx, W x) {
  std::array<W, 1> xs{x};
  return secure_msb_vec<W>(ctx, xs)[0];
}

// y = x * (1 - msb(x)): max(0, x) for two's-complement encodings.
template <RingWord W>
std::vector<W> secure_relu_vec(PartyContext<W>& ctx, std::span<const W> x) {
  const size_t n = x.size();
  std::vector<W> m = secure_msb_vec<W>(ctx, x);
  std::vector<W> keep(n);
  for (size_t e = 0; e < n; ++e)
    keep[e] = ctx.party == 0 ? ring_sub(W{1}, m[e]) : ring_neg(m[e]);
  MulTriples<W> mt = ctx.triples->muls(n);
  return secure_mul_vec<W>(ctx, x, keep, mt);
}

template <RingWord W>
W secure_relu(PartyContext<W>& ctx, W x) {
  std::array<W, 1> xs{x};
  return secure_relu_vec<W>(ctx, xs)[0];
}

// Lockstep pairwise tournaments over n_windows independent windows laid out
// window-major. max(a, b) = b + relu(a - b); ties return the common value.
template <RingWord W>
std::vector<W> secure_max_windows(PartyContext<W>& ctx, std::span<const W> values,
                                  size_t n_windows, size_t window) {
  if (window == 0 || n_windows == 0 || values.size() != n_windows * window)
    throw shape_error("secure_max: empty window or layout mismatch");
  std::vector<W> cur(values.begin(), values.end());
  size_t len = window;
  while (len > 1) {
    size_t pairs = len / 2;
    bool odd = (len % 2) != 0;
    std::vector<W> diffs(pairs * n_windows), keep_b(pairs * n_windows);
    for (size_t w = 0; w < n_windows; ++w)
      for (size_t p = 0; p < pairs; ++p) {
        W a = cur[w * len + 2 * p];
        W b = cur[w * len + 2 * p + 1];
        diffs[w * pairs + p] = ring_sub(a, b);
        keep_b[w * pairs + p] = b;
      }
    std::vector<W> r = secure_relu_vec<W>(ctx, diffs);
    size_t next_len = pairs + (odd ? 1 : 0);
    std::vector<W> next(next_len * n_windows);
    for (size_t w = 0; w < n_windows; ++w) {
      for (size_t p = 0; p < pairs; ++p)
        next[w * next_len + p] = ring_add(keep_b[w * pairs + p], r[w * pairs + p]);
      if (odd) next[w * next_len + pairs] = cur[w * len + len - 1];
    }
    cur = std::move(next);
    len = next_len;
  }
  return cur;
}

template <RingWord W>
W secure_max_tree(PartyContext<W>& ctx, std::span<const W> values) {
  if (values.empty()) throw shape_error("secure_max_tree: empty input");
  return secure_max_windows<W>(ctx, values, 1, values.size())[0];
}

// Mean of a shared window: local share sum, multiply by the public constant
// encode(1/window_size), truncate. No interaction; result is within 2 units
// in the last place of the true mean.
template <RingWord W>
std::vector<W> secure_avgpool_windows(int party, std::span<const W> values, size_t n_windows,
                                      size_t window, const FixedPointCodec& codec) {
  if (window == 0) throw shape_error("secure_avgpool: window_size must be >= 1");
  if (n_windows == 0 || values.size() != n_windows * window)
    throw shape_error("secure_avgpool: layout mismatch");
  // Exact on the production 64-bit ring; narrower test rings don't carry
  // fixed-point values.
  W inv = static_cast<W>(encode(1.0 / static_cast<double>(window), codec));
  std::vector<W> out(n_windows, W{0});
  for (size_t w = 0; w < n_windows; ++w) {
    W acc = 0;
    for (size_t i = 0; i < window; ++i) acc = ring_add(acc, values[w * window + i]);
    out[w] = ring_mul(acc, inv);
  }
  truncate_shares<W>(party, out, codec);
  return out;
}

template <RingWord W>
W secure_avgpool(int party, std::span<const W> values, size_t window_size,
                 const FixedPointCodec& codec) {
  return secure_avgpool_windows<W>(party, values, 1, window_size, codec)[0];
}

// Reveals shared values to both compute parties (OUTPUT_SHARE exchange).
template <RingWord W>
std::vector<W> open_values(PartyContext<W>& ctx, std::span<const W> shares) {
  std::vector<uint8_t> payload;
  put_words<W>(payload, shares);
  ctx.peer->send(MsgType::kOutputShare, std::move(payload));
  Frame f = ctx.peer->expect(MsgType::kOutputShare);
  auto theirs = get_words<W>(f.payload);
  if (theirs.size() != shares.size()) throw session_abort_error("open_values: size mismatch");
  std::vector<W> out(shares.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = ring_add(shares[i], theirs[i]);
  return out;
}

}  // namespace privnet
