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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "privnet/common.hpp"
#include "privnet/ring.hpp"
#include "privnet/secret_sharing.hpp"

namespace privnet {

// ---------------------------------------------------------------------------
// Dense row-major tensors. Image tensors are (height, width, channels).
// ---------------------------------------------------------------------------

struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }
  Tensor(std::vector<size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) throw shape_error("tensor data/shape mismatch");
  }

  static size_t numel_of(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
  }

  size_t numel() const { return data.size(); }
};

inline std::string shape_str(const std::vector<size_t>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// Layer descriptors and the model graph.
// ---------------------------------------------------------------------------

enum class LayerKind { kConv2d, kDense, kRelu, kMaxPool2d, kAvgPool2d, kFlatten };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kDense: return "dense";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool2d: return "maxpool2d";
    case LayerKind::kAvgPool2d: return "avgpool2d";
    case LayerKind::kFlatten: return "flatten";
  }
  return "unknown";
}

struct LayerDescriptor {
  LayerKind kind = LayerKind::kRelu;
  size_t filters = 0, kernel_h = 0, kernel_w = 0, stride = 1;  // conv2d
  size_t units = 0;                                            // dense
  size_t window = 0;                                           // pools
  std::string weights_name, bias_name;                         // conv2d / dense

  static LayerDescriptor conv2d(size_t filters, size_t kh, size_t kw, size_t stride,
                                std::string w, std::string b) {
    LayerDescriptor l;
    l.kind = LayerKind::kConv2d;
    l.filters = filters;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.stride = stride;
    l.weights_name = std::move(w);
    l.bias_name = std::move(b);
    return l;
  }
  static LayerDescriptor dense(size_t units, std::string w, std::string b) {
    LayerDescriptor l;
    l.kind = LayerKind::kDense;
    l.units = units;
    l.weights_name = std::move(w);
    l.bias_name = std::move(b);
    return l;
  }
  static LayerDescriptor relu() { return LayerDescriptor{}; }
  static LayerDescriptor maxpool(size_t window) {
    LayerDescriptor l;
    l.kind = LayerKind::kMaxPool2d;
    l.window = window;
    return l;
  }
  static LayerDescriptor avgpool(size_t window) {
    LayerDescriptor l;
    l.kind = LayerKind::kAvgPool2d;
    l.window = window;
    return l;
  }
  static LayerDescriptor flatten() {
    LayerDescriptor l;
    l.kind = LayerKind::kFlatten;
    return l;
  }
};

struct ModelGraph {
  std::vector<size_t> input_shape;  // (h, w, c)
  std::vector<LayerDescriptor> layers;
  std::map<std::string, Tensor> weights;
  FixedPointCodec codec{};
};

// ---------------------------------------------------------------------------
// Shape algebra. Either produces the full shape trace (input shape followed
// by each layer's output shape) or throws a shape_error naming the layer, so
// a validated forward pass can never hit a shape fault.
// ---------------------------------------------------------------------------

inline std::vector<std::vector<size_t>> shape_trace(const ModelGraph& g) {
  std::vector<std::vector<size_t>> trace;
  trace.push_back(g.input_shape);
  std::vector<size_t> cur = g.input_shape;
  for (size_t li = 0; li < g.layers.size(); ++li) {
    const LayerDescriptor& l = g.layers[li];
    auto fail = [&](const std::string& why) {
      throw shape_error("layer " + std::to_string(li) + " (" + layer_kind_name(l.kind) +
                        "): " + why + "; input shape " + shape_str(cur));
    };
    switch (l.kind) {
      case LayerKind::kConv2d: {
        if (cur.size() != 3) fail("needs a (h, w, c) input");
        if (l.stride == 0) fail("stride must be >= 1");
        if (l.kernel_h == 0 || l.kernel_w == 0 || l.filters == 0) fail("empty kernel");
        if (cur[0] < l.kernel_h || cur[1] < l.kernel_w) fail("kernel does not fit input");
        size_t oh = (cur[0] - l.kernel_h) / l.stride + 1;
        size_t ow = (cur[1] - l.kernel_w) / l.stride + 1;
        cur = {oh, ow, l.filters};
        break;
      }
      case LayerKind::kDense: {
        if (cur.size() != 1) fail("needs a flattened rank-1 input");
        if (l.units == 0) fail("units must be >= 1");
        cur = {l.units};
        break;
      }
      case LayerKind::kRelu:
        break;
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d: {
        if (cur.size() != 3) fail("needs a (h, w, c) input");
        if (l.window == 0) fail("window must be >= 1");
        if (cur[0] < l.window || cur[1] < l.window) fail("window does not fit input");
        cur = {cur[0] / l.window, cur[1] / l.window, cur[2]};
        break;
      }
      case LayerKind::kFlatten:
        cur = {Tensor::numel_of(cur)};
        break;
    }
    trace.push_back(cur);
  }
  return trace;
}

// Expected parameter shapes for a layer given its input shape.
inline std::pair<std::vector<size_t>, std::vector<size_t>> layer_param_shapes(
    const LayerDescriptor& l, const std::vector<size_t>& in) {
  if (l.kind == LayerKind::kConv2d)
    return {{l.kernel_h, l.kernel_w, in[2], l.filters}, {l.filters}};
  if (l.kind == LayerKind::kDense) return {{in[0], l.units}, {l.units}};
  return {{}, {}};
}

// Full validation: shape algebra, every referenced tensor resolves with the
// right shape and, when require_two_class is set, the graph ends in the
// 2-class score vector the serving pipeline expects.
inline std::vector<std::vector<size_t>> validate_model(const ModelGraph& g,
                                                       bool require_two_class = true) {
  auto trace = shape_trace(g);
  for (size_t li = 0; li < g.layers.size(); ++li) {
    const LayerDescriptor& l = g.layers[li];
    if (l.kind != LayerKind::kConv2d && l.kind != LayerKind::kDense) continue;
    auto [wshape, bshape] = layer_param_shapes(l, trace[li]);
    auto check = [&](const std::string& name, const std::vector<size_t>& want) {
      auto it = g.weights.find(name);
      if (it == g.weights.end())
        throw shape_error("layer " + std::to_string(li) + ": tensor \"" + name +
                          "\" is not present in the weight map");
      if (it->second.shape != want)
        throw shape_error("layer " + std::to_string(li) + ": tensor \"" + name + "\" has shape " +
                          shape_str(it->second.shape) + ", expected " + shape_str(want));
    };
    check(l.weights_name, wshape);
    check(l.bias_name, bshape);
  }
  if (require_two_class) {
    const auto& out = trace.back();
    if (out.size() != 1 || out[0] != 2)
      throw shape_error("model must end in a length-2 score vector, got " + shape_str(out));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Plain forward pass (float64). Convolutions are valid (no padding)
// cross-correlations; the final scores are raw logits.
// ---------------------------------------------------------------------------

inline std::vector<double> matmul_plain(std::span<const double> a, std::span<const double> b,
                                        size_t m, size_t k, size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (size_t i = 0; i < m; ++i)
    for (size_t t = 0; t < k; ++t) {
      double ait = a[i * k + t];
      const double* brow = b.data() + t * n;
      double* crow = c.data() + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] += ait * brow[j];
    }
  return c;
}

// Patch matrix for a valid convolution: row (oh*OW + ow), column
// (kh*KW + kw)*C + c — matching the row-major (kh, kw, cin, cout) weight
// layout flattened to (kh*kw*cin) x cout.
template <typename T>
std::vector<T> im2col(std::span<const T> in, size_t h, size_t w, size_t c, size_t kh, size_t kw,
                      size_t stride, size_t oh, size_t ow) {
  std::vector<T> out(oh * ow * kh * kw * c);
  size_t col = kh * kw * c;
  for (size_t i = 0; i < oh; ++i)
    for (size_t j = 0; j < ow; ++j) {
      T* row = out.data() + (i * ow + j) * col;
      for (size_t a = 0; a < kh; ++a)
        for (size_t b = 0; b < kw; ++b) {
          const T* src = in.data() + ((i * stride + a) * w + (j * stride + b)) * c;
          T* dst = row + (a * kw + b) * c;
          for (size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
    }
  return out;
}

inline Tensor conv2d_forward(const Tensor& in, const Tensor& weights, const Tensor& bias,
                             size_t stride) {
  size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  size_t kh = weights.shape[0], kw = weights.shape[1], f = weights.shape[3];
  size_t oh = (h - kh) / stride + 1, ow = (w - kw) / stride + 1;
  auto patches = im2col<double>(in.data, h, w, c, kh, kw, stride, oh, ow);
  auto out = matmul_plain(patches, weights.data, oh * ow, kh * kw * c, f);
  for (size_t p = 0; p < oh * ow; ++p)
    for (size_t j = 0; j < f; ++j) out[p * f + j] += bias.data[j];
  return Tensor({oh, ow, f}, std::move(out));
}

inline Tensor dense_forward(const Tensor& in, const Tensor& weights, const Tensor& bias) {
  size_t n = in.shape[0], units = weights.shape[1];
  auto out = matmul_plain(in.data, weights.data, 1, n, units);
  for (size_t j = 0; j < units; ++j) out[j] += bias.data[j];
  return Tensor({units}, std::move(out));
}

inline Tensor relu_forward(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor maxpool_forward(const Tensor& in, size_t window) {
  size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  size_t oh = h / window, ow = w / window;
  Tensor out({oh, ow, c});
  for (size_t i = 0; i < oh; ++i)
    for (size_t j = 0; j < ow; ++j)
      for (size_t ch = 0; ch < c; ++ch) {
        double m = -std::numeric_limits<double>::infinity();
        for (size_t a = 0; a < window; ++a)
          for (size_t b = 0; b < window; ++b)
            m = std::max(m, in.data[((i * window + a) * w + (j * window + b)) * c + ch]);
        out.data[(i * ow + j) * c + ch] = m;
      }
  return out;
}

inline Tensor avgpool_forward(const Tensor& in, size_t window) {
  size_t h = in.shape[0], w = in.shape[1], c = in.shape[2];
  size_t oh = h / window, ow = w / window;
  Tensor out({oh, ow, c});
  double inv = 1.0 / static_cast<double>(window * window);
  for (size_t i = 0; i < oh; ++i)
    for (size_t j = 0; j < ow; ++j)
      for (size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (size_t a = 0; a < window; ++a)
          for (size_t b = 0; b < window; ++b)
            s += in.data[((i * window + a) * w + (j * window + b)) * c + ch];
        out.data[(i * ow + j) * c + ch] = s * inv;
      }
  return out;
}

inline Tensor layer_forward(const ModelGraph& g, const LayerDescriptor& l, const Tensor& in) {
  switch (l.kind) {
    case LayerKind::kConv2d:
      return conv2d_forward(in, g.weights.at(l.weights_name), g.weights.at(l.bias_name),
                            l.stride);
    case LayerKind::kDense:
      return dense_forward(in, g.weights.at(l.weights_name), g.weights.at(l.bias_name));
    case LayerKind::kRelu:
      return relu_forward(in);
    case LayerKind::kMaxPool2d:
      return maxpool_forward(in, l.window);
    case LayerKind::kAvgPool2d:
      return avgpool_forward(in, l.window);
    case LayerKind::kFlatten:
      return Tensor({in.numel()}, in.data);
  }
  throw shape_error("unknown layer kind");
}

// All intermediate activations, for gradient computation and tests.
// activations[0] is the input, activations[i+1] is layer i's output.
inline std::vector<Tensor> forward_collect(const ModelGraph& g, const Tensor& input) {
  if (input.shape != g.input_shape)
    throw shape_error("input shape " + shape_str(input.shape) + " does not match model input " +
                      shape_str(g.input_shape));
  std::vector<Tensor> acts;
  acts.reserve(g.layers.size() + 1);
  acts.push_back(input);
  for (const auto& l : g.layers) acts.push_back(layer_forward(g, l, acts.back()));
  return acts;
}

inline std::vector<double> forward_plain(const ModelGraph& g, const Tensor& input) {
  return forward_collect(g, input).back().data;
}

// Index of the maximum score; ties break to the lowest index.
inline size_t argmax_class(std::span<const double> scores) {
  if (scores.empty()) throw shape_error("argmax_class: empty score vector");
  size_t best = 0;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

// Creates zero tensors for every parameter the layer stack references.
inline void allocate_weights(ModelGraph& g) {
  auto trace = shape_trace(g);
  for (size_t li = 0; li < g.layers.size(); ++li) {
    const auto& l = g.layers[li];
    if (l.kind != LayerKind::kConv2d && l.kind != LayerKind::kDense) continue;
    auto [wshape, bshape] = layer_param_shapes(l, trace[li]);
    g.weights[l.weights_name] = Tensor(wshape);
    g.weights[l.bias_name] = Tensor(bshape);
  }
}

// ---------------------------------------------------------------------------
// Reference architectures. The two custom classifiers differ only in the
// pooling layer; sized so secure evaluation takes seconds.
// ---------------------------------------------------------------------------

inline ModelGraph make_reference_cnn(std::vector<size_t> input_shape, bool max_pool,
                                     FixedPointCodec codec = {}) {
  ModelGraph g;
  g.input_shape = std::move(input_shape);
  g.codec = codec;
  auto pool = [&](size_t w) {
    return max_pool ? LayerDescriptor::maxpool(w) : LayerDescriptor::avgpool(w);
  };
  g.layers = {
      LayerDescriptor::conv2d(8, 5, 5, 2, "conv1.w", "conv1.b"),
      LayerDescriptor::relu(),
      pool(2),
      LayerDescriptor::conv2d(16, 3, 3, 1, "conv2.w", "conv2.b"),
      LayerDescriptor::relu(),
      pool(2),
      LayerDescriptor::flatten(),
      LayerDescriptor::dense(32, "fc1.w", "fc1.b"),
      LayerDescriptor::relu(),
      LayerDescriptor::dense(2, "fc2.w", "fc2.b"),
  };
  allocate_weights(g);
  return g;
}

inline ModelGraph make_dnn_av(std::vector<size_t> input_shape, FixedPointCodec codec = {}) {
  return make_reference_cnn(std::move(input_shape), /*max_pool=*/false, codec);
}

inline ModelGraph make_dnn_max(std::vector<size_t> input_shape, FixedPointCodec codec = {}) {
  return make_reference_cnn(std::move(input_shape), /*max_pool=*/true, codec);
}

// Smaller trainer-friendly stack for quick experiments.
inline ModelGraph make_compact_cnn(std::vector<size_t> input_shape, FixedPointCodec codec = {}) {
  ModelGraph g;
  g.input_shape = std::move(input_shape);
  g.codec = codec;
  g.layers = {
      LayerDescriptor::conv2d(6, 5, 5, 3, "conv1.w", "conv1.b"),
      LayerDescriptor::relu(),
      LayerDescriptor::avgpool(2),
      LayerDescriptor::flatten(),
      LayerDescriptor::dense(16, "fc1.w", "fc1.b"),
      LayerDescriptor::relu(),
      LayerDescriptor::dense(2, "fc2.w", "fc2.b"),
  };
  allocate_weights(g);
  return g;
}

// He-style initialization: weight std sqrt(2 / fan_in), zero biases.
inline void init_weights(ModelGraph& g, Rng& rng) {
  auto trace = shape_trace(g);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t li = 0; li < g.layers.size(); ++li) {
    const auto& l = g.layers[li];
    if (l.kind != LayerKind::kConv2d && l.kind != LayerKind::kDense) continue;
    Tensor& wt = g.weights.at(l.weights_name);
    size_t fan_in = l.kind == LayerKind::kConv2d ? l.kernel_h * l.kernel_w * trace[li][2]
                                                 : trace[li][0];
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : wt.data) v = gauss(rng) * std_dev;
    for (double& v : g.weights.at(l.bias_name).data) v = 0.0;
  }
}

// ---------------------------------------------------------------------------
// Model files: a diff-able text manifest plus one binary row-major
// little-endian float64 weights blob, in manifest tensor order. The weights
// file sits next to the manifest with its extension replaced by ".weights".
// ---------------------------------------------------------------------------

inline std::filesystem::path weights_path_for(const std::filesystem::path& manifest_path) {
  std::filesystem::path p = manifest_path;
  p.replace_extension(".weights");
  return p;
}

inline void save_model(const ModelGraph& g, const std::filesystem::path& manifest_path) {
  validate_model(g, /*require_two_class=*/false);
  std::ostringstream m;
  m << "PRIVNET-MODEL v1\n";
  m << "codec f " << g.codec.fraction_bits << " k " << g.codec.magnitude_bits << "\n";
  m << "input";
  for (size_t d : g.input_shape) m << " " << d;
  m << "\n";
  for (const auto& l : g.layers) {
    m << "layer " << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::kConv2d:
        m << " filters " << l.filters << " kernel " << l.kernel_h << " " << l.kernel_w
          << " stride " << l.stride << " weights " << l.weights_name << " bias " << l.bias_name;
        break;
      case LayerKind::kDense:
        m << " units " << l.units << " weights " << l.weights_name << " bias " << l.bias_name;
        break;
      case LayerKind::kMaxPool2d:
      case LayerKind::kAvgPool2d:
        m << " window " << l.window;
        break;
      default:
        break;
    }
    m << "\n";
  }
  for (const auto& [name, t] : g.weights) {
    m << "tensor " << name;
    for (size_t d : t.shape) m << " " << d;
    m << "\n";
  }
  std::FILE* mf = std::fopen(manifest_path.string().c_str(), "wb");
  if (!mf) throw io_error("save_model: cannot open " + manifest_path.string());
  std::string text = m.str();
  std::fwrite(text.data(), 1, text.size(), mf);
  std::fclose(mf);

  std::vector<uint8_t> blob;
  for (const auto& [name, t] : g.weights)
    for (double v : t.data) put_f64_le(blob, v);
  auto wpath = weights_path_for(manifest_path);
  std::FILE* wf = std::fopen(wpath.string().c_str(), "wb");
  if (!wf) throw io_error("save_model: cannot open " + wpath.string());
  if (!blob.empty()) std::fwrite(blob.data(), 1, blob.size(), wf);
  std::fclose(wf);
}

// Loads the layer stack and shapes only; weight values stay zero when
// load_weights is false (the form P2 and clients use — the architecture is
// deployment configuration, the weights are not).
inline ModelGraph load_model(const std::filesystem::path& manifest_path,
                             bool load_weights = true) {
  std::FILE* mf = std::fopen(manifest_path.string().c_str(), "rb");
  if (!mf) throw io_error("load_model: cannot open " + manifest_path.string());
  std::string text;
  char buf[4096];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof(buf), mf)) > 0) text.append(buf, got);
  std::fclose(mf);

  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "PRIVNET-MODEL v1")
    throw io_error("load_model: " + manifest_path.string() + " is not a v1 model manifest");
  ModelGraph g;
  std::vector<std::pair<std::string, std::vector<size_t>>> tensor_index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "codec") {
      std::string fk, kk;
      ls >> fk >> g.codec.fraction_bits >> kk >> g.codec.magnitude_bits;
      g.codec.validate();
    } else if (tag == "input") {
      size_t d;
      while (ls >> d) g.input_shape.push_back(d);
    } else if (tag == "layer") {
      std::string kind;
      ls >> kind;
      LayerDescriptor l;
      if (kind == "conv2d") {
        l.kind = LayerKind::kConv2d;
        std::string key;
        while (ls >> key) {
          if (key == "filters") ls >> l.filters;
          else if (key == "kernel") ls >> l.kernel_h >> l.kernel_w;
          else if (key == "stride") ls >> l.stride;
          else if (key == "weights") ls >> l.weights_name;
          else if (key == "bias") ls >> l.bias_name;
          else throw io_error("load_model: unknown conv2d key \"" + key + "\"");
        }
      } else if (kind == "dense") {
        l.kind = LayerKind::kDense;
        std::string key;
        while (ls >> key) {
          if (key == "units") ls >> l.units;
          else if (key == "weights") ls >> l.weights_name;
          else if (key == "bias") ls >> l.bias_name;
          else throw io_error("load_model: unknown dense key \"" + key + "\"");
        }
      } else if (kind == "relu") {
        l.kind = LayerKind::kRelu;
      } else if (kind == "maxpool2d" || kind == "avgpool2d") {
        l.kind = kind == "maxpool2d" ? LayerKind::kMaxPool2d : LayerKind::kAvgPool2d;
        std::string key;
        ls >> key >> l.window;
      } else if (kind == "flatten") {
        l.kind = LayerKind::kFlatten;
      } else {
        throw io_error("load_model: unknown layer kind \"" + kind + "\"");
      }
      g.layers.push_back(std::move(l));
    } else if (tag == "tensor") {
      std::string name;
      ls >> name;
      std::vector<size_t> shape;
      size_t d;
      while (ls >> d) shape.push_back(d);
      tensor_index.emplace_back(name, shape);
    } else {
      throw io_error("load_model: unknown manifest line \"" + line + "\"");
    }
  }
  for (const auto& [name, shape] : tensor_index) g.weights[name] = Tensor(shape);

  if (load_weights) {
    auto wpath = weights_path_for(manifest_path);
    std::FILE* wf = std::fopen(wpath.string().c_str(), "rb");
    if (!wf) throw io_error("load_model: cannot open weights file " + wpath.string());
    for (const auto& [name, shape] : tensor_index) {
      Tensor& t = g.weights.at(name);
      std::vector<uint8_t> raw(t.numel() * 8);
      if (std::fread(raw.data(), 1, raw.size(), wf) != raw.size()) {
        std::fclose(wf);
        throw io_error("load_model: weights file truncated at tensor " + name);
      }
      for (size_t i = 0; i < t.numel(); ++i) t.data[i] = get_f64_le(raw.data() + 8 * i);
    }
    std::fclose(wf);
  }
  validate_model(g, /*require_two_class=*/false);
  return g;
}

// ---------------------------------------------------------------------------
// Model sharing: every weight tensor is fixed-point encoded then additively
// shared elementwise. Reconstructing the two vaults gives the encoded
// plaintext model exactly, which is what the receipt checksum covers.
// ---------------------------------------------------------------------------

struct ModelShares {
  std::vector<VaultRecord> party0, party1;
  std::string reconstruction_checksum;  // BLAKE2b over the encoded tensors, manifest order
};

inline ModelShares share_model(const ModelGraph& g, Rng& rng) {
  sodium_ready();
  ModelShares out;
  crypto_generichash_state h;
  crypto_generichash_init(&h, nullptr, 0, 32);
  for (const auto& [name, t] : g.weights) {
    std::vector<uint64_t> enc(t.numel());
    for (size_t i = 0; i < t.numel(); ++i) {
      try {
        enc[i] = encode(t.data[i], g.codec);
      } catch (const encode_overflow_error&) {
        throw encode_overflow_error("share_model: tensor \"" + name + "\" element " +
                                    std::to_string(i) + " value " + std::to_string(t.data[i]) +
                                    " exceeds the codec range");
      }
    }
    std::vector<uint8_t> enc_bytes;
    enc_bytes.reserve(enc.size() * 8);
    for (uint64_t v : enc) put_u64_le(enc_bytes, v);
    crypto_generichash_update(&h, enc_bytes.data(), enc_bytes.size());

    auto [s0, s1] = additive_share_vec<uint64_t>(enc, rng);
    out.party0.push_back(VaultRecord{name, t.shape, 0, std::move(s0)});
    out.party1.push_back(VaultRecord{name, t.shape, 1, std::move(s1)});
  }
  std::array<uint8_t, 32> digest;
  crypto_generichash_final(&h, digest.data(), digest.size());
  out.reconstruction_checksum = to_hex(digest);
  return out;
}

// One party's view of a shared model: the public graph skeleton plus that
// party's share of every weight tensor.
struct SharedModel {
  ModelGraph graph;  // weight values are all zero; shapes and codec are real
  std::map<std::string, std::vector<uint64_t>> shares;
  int party = 0;
};

inline SharedModel shared_model_from_vault(const ModelGraph& skeleton,
                                           const std::vector<VaultRecord>& records, int party) {
  SharedModel sm;
  sm.graph = skeleton;
  sm.party = party;
  for (const auto& r : records) {
    if (r.party != party)
      throw malformed_shares_error("vault record " + r.name + " belongs to party " +
                                   std::to_string(r.party) + ", not " + std::to_string(party));
    auto it = sm.graph.weights.find(r.name);
    if (it == sm.graph.weights.end())
      throw shape_error("vault tensor \"" + r.name + "\" is not referenced by the model");
    if (it->second.shape != r.shape)
      throw shape_error("vault tensor \"" + r.name + "\" shape " + shape_str(r.shape) +
                        " != model shape " + shape_str(it->second.shape));
    sm.shares[r.name] = r.values;
  }
  for (const auto& [name, t] : sm.graph.weights)
    if (!sm.shares.count(name))
      throw malformed_shares_error("vault is missing tensor \"" + name + "\"");
  return sm;
}

}  // namespace privnet
