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

#include <thread>

#include "privnet/mpc.hpp"
#include "privnet/nn_graph.hpp"

namespace privnet {

// One party's additive shares of a tensor, fixed-point encoded.
struct SecureTensor {
  std::vector<size_t> shape;
  std::vector<uint64_t> shares;
};

inline std::pair<SecureTensor, SecureTensor> share_tensor(const Tensor& t,
                                                          const FixedPointCodec& codec,
                                                          Rng& rng) {
  std::vector<uint64_t> enc(t.numel());
  for (size_t i = 0; i < t.numel(); ++i) enc[i] = encode(t.data[i], codec);
  auto [s0, s1] = additive_share_vec<uint64_t>(enc, rng);
  return {SecureTensor{t.shape, std::move(s0)}, SecureTensor{t.shape, std::move(s1)}};
}

inline Tensor reconstruct_tensor(const SecureTensor& s0, const SecureTensor& s1,
                                 const FixedPointCodec& codec) {
  if (s0.shape != s1.shape) throw malformed_shares_error("reconstruct_tensor: shape mismatch");
  Tensor out(s0.shape);
  for (size_t i = 0; i < out.numel(); ++i)
    out.data[i] = decode(ring_add(s0.shares[i], s1.shares[i]), codec);
  return out;
}

// ---------------------------------------------------------------------------
// Triple demand of one forward pass, derived from the public layer stack and
// shapes. P2 streams deliveries in exactly this order; the compute parties'
// consumption mirrors it, and any drift aborts the session.
// ---------------------------------------------------------------------------

inline std::vector<TripleNeed> triple_demand(const ModelGraph& g) {
  const int bits = ring_bits_v<uint64_t>;
  std::vector<TripleNeed> needs;
  auto trace = shape_trace(g);
  for (size_t li = 0; li < g.layers.size(); ++li) {
    const LayerDescriptor& l = g.layers[li];
    const auto& in = trace[li];
    const auto& out = trace[li + 1];
    switch (l.kind) {
      case LayerKind::kConv2d:
        needs.push_back(
            TripleNeed::matmul(out[0] * out[1], l.kernel_h * l.kernel_w * in[2], l.filters));
        break;
      case LayerKind::kDense:
        needs.push_back(TripleNeed::matmul(1, in[0], l.units));
        break;
      case LayerKind::kRelu:
        append_relu_needs(needs, Tensor::numel_of(in), bits);
        break;
      case LayerKind::kMaxPool2d:
        append_max_windows_needs(needs, out[0] * out[1] * out[2], l.window * l.window, bits);
        break;
      case LayerKind::kAvgPool2d:
      case LayerKind::kFlatten:
        break;
    }
  }
  return needs;
}

namespace detail {

// Gathers pooling windows into window-major order; window w = output index
// (i, j, ch) row-major, so pooled results land directly in output layout.
inline std::vector<uint64_t> gather_windows(const SecureTensor& in, size_t window) {
  size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  size_t oh = h / window, ow = w / window;
  std::vector<uint64_t> out(oh * ow * c * window * window);
  size_t wsz = window * window;
  for (size_t i = 0; i < oh; ++i)
    for (size_t j = 0; j < ow; ++j)
      for (size_t ch = 0; ch < c; ++ch) {
        uint64_t* dst = out.data() + ((i * ow + j) * c + ch) * wsz;
        for (size_t a = 0; a < window; ++a)
          for (size_t b = 0; b < window; ++b)
            dst[a * window + b] =
                in.shares[((i * window + a) * w + (j * window + b)) * c + ch];
      }
  return out;
}

inline SecureTensor secure_layer_forward(PartyContext<uint64_t>& ctx, const SharedModel& model,
                                         const LayerDescriptor& l, const SecureTensor& in) {
  switch (l.kind) {
    case LayerKind::kConv2d: {
      size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
      size_t oh = (h - l.kernel_h) / l.stride + 1, ow = (w - l.kernel_w) / l.stride + 1;
      size_t m = oh * ow, k = l.kernel_h * l.kernel_w * c, n = l.filters;
      auto patches = im2col<uint64_t>(in.shares, h, w, c, l.kernel_h, l.kernel_w, l.stride, oh, ow);
      MatmulTriple<uint64_t> t = ctx.triples->matmul(m, k, n);
      auto out = secure_matmul<uint64_t>(ctx, patches, model.shares.at(l.weights_name), m, k, n, t);
      truncate_shares<uint64_t>(ctx.party, out, ctx.codec);
      const auto& bias = model.shares.at(l.bias_name);
      for (size_t p = 0; p < m; ++p)
        for (size_t j = 0; j < n; ++j) out[p * n + j] = ring_add(out[p * n + j], bias[j]);
      return SecureTensor{{oh, ow, l.filters}, std::move(out)};
    }
    case LayerKind::kDense: {
      size_t n_in = in.shape[0];
      MatmulTriple<uint64_t> t = ctx.triples->matmul(1, n_in, l.units);
      auto out = secure_matmul<uint64_t>(ctx, in.shares, model.shares.at(l.weights_name), 1, n_in,
                                         l.units, t);
      truncate_shares<uint64_t>(ctx.party, out, ctx.codec);
      const auto& bias = model.shares.at(l.bias_name);
      for (size_t j = 0; j < l.units; ++j) out[j] = ring_add(out[j], bias[j]);
      return SecureTensor{{l.units}, std::move(out)};
    }
    case LayerKind::kRelu: {
      auto out = secure_relu_vec<uint64_t>(ctx, in.shares);
      return SecureTensor{in.shape, std::move(out)};
    }
    case LayerKind::kMaxPool2d: {
      size_t oh = in.shape[0] / l.window, ow = in.shape[1] / l.window, c = in.shape[2];
      auto windows = gather_windows(in, l.window);
      auto out = secure_max_windows<uint64_t>(ctx, windows, oh * ow * c, l.window * l.window);
      return SecureTensor{{oh, ow, c}, std::move(out)};
    }
    case LayerKind::kAvgPool2d: {
      size_t oh = in.shape[0] / l.window, ow = in.shape[1] / l.window, c = in.shape[2];
      auto windows = gather_windows(in, l.window);
      auto out = secure_avgpool_windows<uint64_t>(ctx.party, windows, oh * ow * c,
                                                  l.window * l.window, ctx.codec);
      return SecureTensor{{oh, ow, c}, std::move(out)};
    }
    case LayerKind::kFlatten:
      return SecureTensor{{Tensor::numel_of(in.shape)}, in.shares};
  }
  throw shape_error("unknown layer kind");
}

}  // namespace detail

// Evaluates the graph layer by layer over shares. Any protocol failure
// aborts the session with a diagnostic naming the layer. The reconstructed
// scores track forward_plain within
//   (truncations along the path + pool tournament depth) * 2^-f
// per output element, on top of the fixed-point quantization of weights and
// inputs.
inline std::vector<uint64_t> forward_secure(PartyContext<uint64_t>& ctx, const SharedModel& model,
                                            const SecureTensor& input) {
  ctx.require_triples();
  if (input.shape != model.graph.input_shape)
    throw shape_error("forward_secure: input shape " + shape_str(input.shape) +
                      " != model input " + shape_str(model.graph.input_shape));
  SecureTensor cur = input;
  for (size_t li = 0; li < model.graph.layers.size(); ++li) {
    const LayerDescriptor& l = model.graph.layers[li];
    try {
      cur = detail::secure_layer_forward(ctx, model, l, cur);
    } catch (const session_abort_error&) {
      throw;  // peer already knows
    } catch (const error& e) {
      std::string diag = "layer " + std::to_string(li) + " (" + layer_kind_name(l.kind) +
                         "): " + e.what();
      ctx.peer->send_abort(diag);
      throw session_abort_error(diag);
    }
  }
  return cur.shares;
}

// P2's side of one forward pass: derive the schedule from the public graph
// and stream the triples.
inline void dealer_serve_forward(Channel& to_p0, Channel& to_p1, const ModelGraph& skeleton,
                                 Rng& rng) {
  auto needs = triple_demand(skeleton);
  run_dealer<uint64_t>(to_p0, to_p1, needs, rng);
}

// Cumulative worst-case units-in-the-last-place budget of the truncating
// operations along the deepest path, per the forward_secure contract.
inline size_t error_budget_ulps(const ModelGraph& g) {
  size_t ulps = 0;
  for (const auto& l : g.layers) {
    switch (l.kind) {
      case LayerKind::kConv2d:
      case LayerKind::kDense:
        ulps += 1;  // one truncation per matmul output
        break;
      case LayerKind::kAvgPool2d:
        ulps += 2;  // public 1/w constant quantization plus one truncation
        break;
      case LayerKind::kMaxPool2d: {
        // tournament depth
        size_t wsz = l.window * l.window, depth = 0;
        while (wsz > 1) {
          wsz = wsz / 2 + wsz % 2;
          ++depth;
        }
        ulps += depth;
        break;
      }
      default:
        break;
    }
  }
  return ulps;
}

// ---------------------------------------------------------------------------
// In-process three-party inference over local channels: the same protocol
// code the networked service runs, with threads standing in for processes.
// With fixed seeds the transcript — and therefore every output share — is
// byte-reproducible, which is what lets the serving tests compare networked
// results against this harness bit for bit.
// ---------------------------------------------------------------------------

struct LocalInferenceResult {
  std::vector<uint64_t> shares0, shares1;
  std::vector<double> scores;
};

inline LocalInferenceResult secure_infer_local(const SharedModel& m0, const SharedModel& m1,
                                               const SecureTensor& in0, const SecureTensor& in1,
                                               uint64_t dealer_seed,
                                               const SessionId& session = {}) {
  auto [c01, c10] = LocalChannel::make_pair(session);
  auto [c02, c20] = LocalChannel::make_pair(session);
  auto [c12, c21] = LocalChannel::make_pair(session);

  LocalInferenceResult result;
  std::exception_ptr errs[3] = {nullptr, nullptr, nullptr};

  std::thread t2([&] {
    try {
      Rng rng = make_rng(dealer_seed);
      dealer_serve_forward(*c20, *c21, m0.graph, rng);
    } catch (...) {
      errs[2] = std::current_exception();
    }
  });
  std::thread t0([&] {
    try {
      DealerFedSource<uint64_t> src(c02.get());
      PartyContext<uint64_t> ctx{0, c01.get(), c02.get(), &src, m0.graph.codec};
      result.shares0 = forward_secure(ctx, m0, in0);
    } catch (...) {
      errs[0] = std::current_exception();
    }
  });
  std::thread t1([&] {
    try {
      DealerFedSource<uint64_t> src(c12.get());
      PartyContext<uint64_t> ctx{1, c10.get(), c12.get(), &src, m1.graph.codec};
      result.shares1 = forward_secure(ctx, m1, in1);
    } catch (...) {
      errs[1] = std::current_exception();
    }
  });
  t0.join();
  t1.join();
  t2.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);

  result.scores.resize(result.shares0.size());
  for (size_t i = 0; i < result.scores.size(); ++i)
    result.scores[i] =
        decode(ring_add(result.shares0[i], result.shares1[i]), m0.graph.codec);
  return result;
}

}  // namespace privnet
