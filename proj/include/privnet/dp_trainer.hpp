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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "privnet/nn_graph.hpp"

namespace privnet {

// Plaintext training: vanilla SGD and differentially-private SGD (clip the
// per-microbatch gradients to C, add Gaussian noise sigma*C, average), plus
// the zCDP accountant that converts (sigma, steps) into an (epsilon, delta)
// guarantee. Training stays in float64; only the finished weights are
// encoded and shared.

struct DpSgdConfig {
  double learning_rate = 0.05;
  double l2_norm_clip = 1.0;     // C
  double noise_multiplier = 1.0;  // sigma
  size_t num_microbatches = 32;   // m
  size_t batch_size = 32;         // B; m divides B
  size_t population_size = 0;     // N: training set size
  double delta = 1e-5;

  void validate() const {
    if (learning_rate <= 0) throw config_error("dp-sgd: learning_rate must be positive");
    if (l2_norm_clip <= 0) throw config_error("dp-sgd: l2_norm_clip must be positive");
    if (noise_multiplier < 0) throw config_error("dp-sgd: noise_multiplier must be >= 0");
    if (num_microbatches < 1) throw config_error("dp-sgd: num_microbatches must be >= 1");
    if (batch_size < 1) throw config_error("dp-sgd: batch_size must be >= 1");
    if (batch_size % num_microbatches != 0)
      throw config_error("dp-sgd: num_microbatches (" + std::to_string(num_microbatches) +
                         ") must divide batch_size (" + std::to_string(batch_size) + ")");
    if (population_size < batch_size)
      throw config_error("dp-sgd: population_size must be >= batch_size");
    if (!(delta > 0 && delta < 1)) throw config_error("dp-sgd: delta must be in (0, 1)");
    if (delta >= 1.0 / static_cast<double>(population_size))
      throw config_error("dp-sgd: delta must be < 1/population_size");
  }
};

// ---------------------------------------------------------------------------
// Accountant. Each DP-SGD step is one Gaussian mechanism release of a
// sensitivity-C sum with noise sigma*C, i.e. rho = 1/(2 sigma^2) in zCDP;
// rho adds across steps, and epsilon(delta) = rho + 2*sqrt(rho*ln(1/delta)).
// No subsampling amplification is claimed: this is a conservative bound.
// ---------------------------------------------------------------------------

struct PrivacySpend {
  uint64_t steps_taken = 0;
  double rho = 0.0;  // +inf once a sigma=0 step is recorded

  void record_step(double noise_multiplier) {
    ++steps_taken;
    if (noise_multiplier <= 0)
      rho = std::numeric_limits<double>::infinity();
    else
      rho += 1.0 / (2.0 * noise_multiplier * noise_multiplier);
  }

  double epsilon_at(double delta) const {
    if (steps_taken == 0 || rho == 0.0) return 0.0;
    if (!(delta > 0 && delta < 1)) throw config_error("epsilon_at: delta must be in (0, 1)");
    if (std::isinf(rho)) return std::numeric_limits<double>::infinity();
    return rho + 2.0 * std::sqrt(rho * std::log(1.0 / delta));
  }
};

// Closed form for T identical steps. sigma = 0 yields the infinite-epsilon
// sentinel, not an exception.
inline double account_epsilon(double noise_multiplier, uint64_t steps, double delta) {
  PrivacySpend spend;
  for (uint64_t t = 0; t < steps; ++t) spend.record_step(noise_multiplier);
  return spend.epsilon_at(delta);
}

// ---------------------------------------------------------------------------
// Gradients. backward() returns the gradient of the mean softmax
// cross-entropy loss over the given samples with respect to every weight
// tensor, exactly (reverse mode), plus the loss itself.
// ---------------------------------------------------------------------------

using GradientMap = std::map<std::string, Tensor>;

inline GradientMap zero_gradients(const ModelGraph& g) {
  GradientMap grads;
  for (const auto& [name, t] : g.weights) grads[name] = Tensor(t.shape);
  return grads;
}

namespace detail {

// dLoss/dlogits for one sample; returns the sample's loss.
inline double softmax_xent_backward(std::span<const double> logits, int label,
                                    std::vector<double>& dlogits) {
  double peak = *std::max_element(logits.begin(), logits.end());
  double denom = 0;
  dlogits.resize(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) denom += std::exp(logits[i] - peak);
  for (size_t i = 0; i < logits.size(); ++i) {
    double p = std::exp(logits[i] - peak) / denom;
    dlogits[i] = p - (static_cast<int>(i) == label ? 1.0 : 0.0);
  }
  return std::log(denom) - (logits[label] - peak);
}

// Accumulates one sample's parameter gradients; returns dLoss/dinput flowing
// backwards through the stack.
inline void backward_sample(const ModelGraph& g, const std::vector<Tensor>& acts,
                            std::vector<double> dout, GradientMap& grads) {
  for (size_t li = g.layers.size(); li-- > 0;) {
    const LayerDescriptor& l = g.layers[li];
    const Tensor& in = acts[li];
    std::vector<double> din;
    switch (l.kind) {
      case LayerKind::kDense: {
        const Tensor& w = g.weights.at(l.weights_name);
        Tensor& dw = grads.at(l.weights_name);
        Tensor& db = grads.at(l.bias_name);
        size_t n = in.shape[0], u = l.units;
        din.assign(n, 0.0);
        for (size_t i = 0; i < n; ++i) {
          double xi = in.data[i];
          for (size_t j = 0; j < u; ++j) {
            dw.data[i * u + j] += xi * dout[j];
            din[i] += w.data[i * u + j] * dout[j];
          }
        }
        for (size_t j = 0; j < u; ++j) db.data[j] += dout[j];
        break;
      }
      case LayerKind::kConv2d: {
        const Tensor& w = g.weights.at(l.weights_name);
        Tensor& dw = grads.at(l.weights_name);
        Tensor& db = grads.at(l.bias_name);
        size_t H = in.shape[0], W = in.shape[1], C = in.shape[2];
        size_t KH = l.kernel_h, KW = l.kernel_w, F = l.filters, S = l.stride;
        size_t OH = (H - KH) / S + 1, OW = (W - KW) / S + 1;
        din.assign(in.numel(), 0.0);
        for (size_t i = 0; i < OH; ++i)
          for (size_t j = 0; j < OW; ++j)
            for (size_t f = 0; f < F; ++f) {
              double dy = dout[(i * OW + j) * F + f];
              db.data[f] += dy;
              for (size_t a = 0; a < KH; ++a)
                for (size_t b = 0; b < KW; ++b)
                  for (size_t c = 0; c < C; ++c) {
                    size_t in_idx = ((i * S + a) * W + (j * S + b)) * C + c;
                    size_t w_idx = ((a * KW + b) * C + c) * F + f;
                    dw.data[w_idx] += in.data[in_idx] * dy;
                    din[in_idx] += w.data[w_idx] * dy;
                  }
            }
        break;
      }
      case LayerKind::kRelu: {
        din = std::move(dout);
        for (size_t i = 0; i < din.size(); ++i)
          if (in.data[i] <= 0.0) din[i] = 0.0;
        break;
      }
      case LayerKind::kMaxPool2d: {
        size_t H = in.shape[0], W = in.shape[1], C = in.shape[2], win = l.window;
        size_t OH = H / win, OW = W / win;
        din.assign(in.numel(), 0.0);
        for (size_t i = 0; i < OH; ++i)
          for (size_t j = 0; j < OW; ++j)
            for (size_t c = 0; c < C; ++c) {
              // route to the first maximum in scan order
              size_t best = ((i * win) * W + (j * win)) * C + c;
              for (size_t a = 0; a < win; ++a)
                for (size_t b = 0; b < win; ++b) {
                  size_t idx = ((i * win + a) * W + (j * win + b)) * C + c;
                  if (in.data[idx] > in.data[best]) best = idx;
                }
              din[best] += dout[(i * OW + j) * C + c];
            }
        break;
      }
      case LayerKind::kAvgPool2d: {
        size_t H = in.shape[0], W = in.shape[1], C = in.shape[2], win = l.window;
        size_t OH = H / win, OW = W / win;
        double inv = 1.0 / static_cast<double>(win * win);
        din.assign(in.numel(), 0.0);
        for (size_t i = 0; i < OH; ++i)
          for (size_t j = 0; j < OW; ++j)
            for (size_t c = 0; c < C; ++c) {
              double share = dout[(i * OW + j) * C + c] * inv;
              for (size_t a = 0; a < win; ++a)
                for (size_t b = 0; b < win; ++b)
                  din[((i * win + a) * W + (j * win + b)) * C + c] += share;
            }
        break;
      }
      case LayerKind::kFlatten:
        din = std::move(dout);
        break;
    }
    dout = std::move(din);
  }
}

}  // namespace detail

// Gradient of the mean loss over the samples. Traversal order is fixed, so
// results are bit-deterministic for a given batch.
inline std::pair<double, GradientMap> backward(const ModelGraph& g,
                                               std::span<const Tensor* const> inputs,
                                               std::span<const int> labels) {
  if (inputs.empty() || inputs.size() != labels.size())
    throw shape_error("backward: empty batch or label count mismatch");
  GradientMap grads = zero_gradients(g);
  double loss = 0;
  std::vector<double> dlogits;
  for (size_t s = 0; s < inputs.size(); ++s) {
    auto acts = forward_collect(g, *inputs[s]);
    loss += detail::softmax_xent_backward(acts.back().data, labels[s], dlogits);
    detail::backward_sample(g, acts, dlogits, grads);
  }
  double inv = 1.0 / static_cast<double>(inputs.size());
  loss *= inv;
  for (auto& [name, t] : grads)
    for (double& v : t.data) v *= inv;
  return {loss, std::move(grads)};
}

inline double global_norm(const GradientMap& grads) {
  double sq = 0;
  for (const auto& [name, t] : grads)
    for (double v : t.data) sq += v * v;
  return std::sqrt(sq);
}

// Scales the whole gradient to global L2 norm at most C. Gradients already
// inside the ball are returned untouched (bit-exact identity).
inline GradientMap clip_gradient(GradientMap grads, double clip_norm) {
  if (clip_norm <= 0) throw config_error("clip_gradient: clip norm must be positive");
  double norm = global_norm(grads);
  if (norm <= clip_norm) return grads;
  double scale = clip_norm / norm;
  for (auto& [name, t] : grads)
    for (double& v : t.data) v *= scale;
  return grads;
}

inline void apply_update(ModelGraph& g, const GradientMap& grads, double learning_rate) {
  for (auto& [name, t] : g.weights) {
    const Tensor& d = grads.at(name);
    for (size_t i = 0; i < t.numel(); ++i) t.data[i] -= learning_rate * d.data[i];
  }
}

// One vanilla SGD step on the mean batch gradient.
inline double sgd_step(ModelGraph& g, std::span<const Tensor* const> inputs,
                       std::span<const int> labels, double learning_rate) {
  auto [loss, grads] = backward(g, inputs, labels);
  apply_update(g, grads, learning_rate);
  return loss;
}

// One DP-SGD step: split the batch into m microbatches, clip each
// microbatch's mean gradient to C, sum, add N(0, (sigma*C)^2) per
// coordinate, divide by m, descend. Records one accountant step.
inline double dp_sgd_step(ModelGraph& g, std::span<const Tensor* const> inputs,
                          std::span<const int> labels, const DpSgdConfig& cfg, Rng& rng,
                          PrivacySpend& spend) {
  cfg.validate();
  if (inputs.size() != cfg.batch_size)
    throw config_error("dp_sgd_step: batch has " + std::to_string(inputs.size()) +
                       " samples, config says " + std::to_string(cfg.batch_size));
  const size_t m = cfg.num_microbatches;
  const size_t micro = cfg.batch_size / m;

  double loss = 0;
  GradientMap sum;
  for (size_t i = 0; i < m; ++i) {
    auto [micro_loss, grads] =
        backward(g, inputs.subspan(i * micro, micro), labels.subspan(i * micro, micro));
    loss += micro_loss;
    GradientMap clipped = clip_gradient(std::move(grads), cfg.l2_norm_clip);
    if (i == 0) {
      sum = std::move(clipped);
    } else {
      for (auto& [name, t] : sum) {
        const Tensor& c = clipped.at(name);
        for (size_t j = 0; j < t.numel(); ++j) t.data[j] += c.data[j];
      }
    }
  }
  loss /= static_cast<double>(m);

  if (cfg.noise_multiplier > 0) {
    std::normal_distribution<double> gauss(0.0, cfg.noise_multiplier * cfg.l2_norm_clip);
    for (auto& [name, t] : sum)
      for (double& v : t.data) v += gauss(rng);
  }
  double inv_m = 1.0 / static_cast<double>(m);
  for (auto& [name, t] : sum)
    for (double& v : t.data) v *= inv_m;

  apply_update(g, sum, cfg.learning_rate);
  spend.record_step(cfg.noise_multiplier);
  return loss;
}

// ---------------------------------------------------------------------------
// Training loop: seeded shuffling, per-epoch metrics on a held-out split,
// early stopping on held-out accuracy, best-checkpoint retention.
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;

  size_t size() const { return images.size(); }
};

struct EvalMetrics {
  double loss = 0;
  double accuracy = 0;
};

inline EvalMetrics evaluate(const ModelGraph& g, const Dataset& data) {
  if (data.size() == 0) return {};
  EvalMetrics m;
  std::vector<double> dlogits;
  for (size_t i = 0; i < data.size(); ++i) {
    auto scores = forward_plain(g, data.images[i]);
    m.loss += detail::softmax_xent_backward(scores, data.labels[i], dlogits);
    if (argmax_class(scores) == static_cast<size_t>(data.labels[i])) m.accuracy += 1.0;
  }
  m.loss /= static_cast<double>(data.size());
  m.accuracy /= static_cast<double>(data.size());
  return m;
}

struct TrainOptions {
  size_t epochs = 10;
  size_t batch_size = 32;
  double learning_rate = 0.05;
  uint64_t seed = 1;
  size_t patience = 5;  // early stop when held-out accuracy stalls this long
  std::optional<DpSgdConfig> dp;
  double holdout_fraction = 0.2;  // used when no validation set is supplied
};

struct MetricsRow {
  size_t epoch;
  std::string split;
  double loss;
  double accuracy;
  double epsilon;
};

inline std::string metrics_line(const MetricsRow& r) {
  std::ostringstream os;
  os << r.epoch << "," << r.split << "," << r.loss << "," << r.accuracy << ",";
  if (std::isinf(r.epsilon))
    os << "inf";
  else
    os << r.epsilon;
  return os.str();
}

struct TrainResult {
  ModelGraph model;  // best checkpoint by held-out accuracy
  std::vector<MetricsRow> log;
  PrivacySpend spend;
  double best_accuracy = 0;
  size_t epochs_run = 0;
};

inline TrainResult train(const ModelGraph& initial, const Dataset& data,
                         const Dataset* validation, const TrainOptions& opt) {
  if (data.size() == 0) throw config_error("train: empty dataset");
  if (opt.dp) opt.dp->validate();
  const size_t batch = opt.dp ? opt.dp->batch_size : opt.batch_size;
  const double lr = opt.dp ? opt.dp->learning_rate : opt.learning_rate;
  if (batch == 0) throw config_error("train: batch_size must be >= 1");

  Rng rng = make_rng(opt.seed);

  // carve a held-out split when the caller brings none
  std::vector<size_t> train_idx(data.size());
  std::iota(train_idx.begin(), train_idx.end(), size_t{0});
  Dataset holdout;
  if (!validation) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    size_t n_hold = std::max<size_t>(1, static_cast<size_t>(
                                            static_cast<double>(data.size()) * opt.holdout_fraction));
    n_hold = std::min(n_hold, data.size() - 1);
    for (size_t i = 0; i < n_hold; ++i) {
      holdout.images.push_back(data.images[train_idx[data.size() - 1 - i]]);
      holdout.labels.push_back(data.labels[train_idx[data.size() - 1 - i]]);
    }
    train_idx.resize(data.size() - n_hold);
  }
  const Dataset& val = validation ? *validation : holdout;

  TrainResult result;
  result.model = initial;
  ModelGraph current = initial;
  result.best_accuracy = -1.0;
  size_t stall = 0;

  for (size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    size_t n_batches = train_idx.size() / batch;  // partial tail batches are dropped
    if (n_batches == 0)
      throw config_error("train: batch_size exceeds the training split");
    double epoch_loss = 0;
    for (size_t b = 0; b < n_batches; ++b) {
      std::vector<const Tensor*> inputs(batch);
      std::vector<int> labels(batch);
      for (size_t i = 0; i < batch; ++i) {
        inputs[i] = &data.images[train_idx[b * batch + i]];
        labels[i] = data.labels[train_idx[b * batch + i]];
      }
      if (opt.dp)
        epoch_loss += dp_sgd_step(current, inputs, labels, *opt.dp, rng, result.spend);
      else
        epoch_loss += sgd_step(current, inputs, labels, lr);
    }
    epoch_loss /= static_cast<double>(n_batches);

    double eps = opt.dp ? result.spend.epsilon_at(opt.dp->delta) : 0.0;
    EvalMetrics train_m = evaluate(current, data);
    EvalMetrics val_m = evaluate(current, val);
    result.log.push_back(MetricsRow{epoch, "train", train_m.loss, train_m.accuracy, eps});
    result.log.push_back(MetricsRow{epoch, "test", val_m.loss, val_m.accuracy, eps});
    result.epochs_run = epoch;

    if (val_m.accuracy > result.best_accuracy) {
      result.best_accuracy = val_m.accuracy;
      result.model = current;
      stall = 0;
    } else if (++stall >= opt.patience) {
      break;
    }
  }
  if (result.best_accuracy < 0) result.best_accuracy = 0;
  return result;
}

}  // namespace privnet
