// res2ctx/nn.hpp

// Copyright 2026  res2ctx contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "res2ctx/graph.hpp"
#include "res2ctx/rng.hpp"

namespace res2ctx {

// Owns every learnable parameter and every persistent buffer (e.g. batch-norm
// running statistics) of a model, addressable by hierarchical name.  Creation
// order is fixed by construction, which makes checkpoints and seeded
// initialization deterministic.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor* tensor;  // parameter value or buffer
    bool is_param;
  };

  Parameter* create(const std::string& name, std::vector<Index> shape, Rng& rng, double bound);
  Parameter* create_const(const std::string& name, std::vector<Index> shape, double fill);
  Tensor* create_buffer(const std::string& name, std::vector<Index> shape, double fill);

  Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Exact count of scalar learnables; names starting with `exclude_prefix`
  // (when non-empty) are skipped.  Buffers never count.
  int64_t count(const std::string& exclude_prefix = "") const;

  void zero_grads();

 private:
  void check_fresh(const std::string& name) const;

  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<std::unique_ptr<Tensor>> buffers_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

// Binds parameters into one graph, caching the leaf Var so each parameter is
// materialized once per forward pass no matter how many layers touch it.
struct Binder {
  explicit Binder(Graph& graph) : g(graph) {}
  Graph& g;
  std::unordered_map<const Parameter*, Var> cache;

  Var operator()(Parameter* p) {
    auto it = cache.find(p);
    if (it != cache.end()) return it->second;
    Var v = g.param(*p);
    cache.emplace(p, v);
    return v;
  }
};

enum class Mode { kTrain, kEval };

// Per-channel scaling attention:
//   s = sigmoid(excite(relu(squeeze(mean_over_time(x)))));  out[c,t] = s[c]*x[c,t]
class SeBlock {
 public:
  SeBlock(ParamStore& store, const std::string& prefix, Index channels, Index bottleneck,
          Rng& rng);
  Var forward(Binder& b, Var x) const;
  Index channels() const { return channels_; }

 private:
  Index channels_;
  Parameter *squeeze_w_, *squeeze_b_, *excite_w_, *excite_b_;
};

// 1-D batch norm over (batch, time) per channel; vectors are treated as
// single-frame maps so the same layer serves the pooled-statistics path.
// Train mode normalizes with batch statistics (population variance) and
// updates running stats with momentum; eval mode uses the stored stats.
class BatchNorm1d {
 public:
  BatchNorm1d(ParamStore& store, const std::string& prefix, Index channels,
              double momentum = 0.1, double eps = 1e-5);
  std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode);
  Var forward_one(Binder& b, Var x, Mode mode);

  const Tensor& running_mean() const { return *running_mean_; }
  const Tensor& running_var() const { return *running_var_; }
  double momentum() const { return momentum_; }

 private:
  Index channels_;
  double momentum_, eps_;
  Parameter *gamma_, *beta_;
  Tensor *running_mean_, *running_var_;
};

// conv1d -> batch norm -> relu.  BN/ReLU can be disabled to expose the bare
// convolution (used by identity fixtures).
struct ConvOptions {
  bool use_bn = true;
  bool use_relu = true;
};

class ConvBnRelu {
 public:
  using Options = ConvOptions;
  ConvBnRelu(ParamStore& store, const std::string& prefix, Index in_channels, Index out_channels,
             Index kernel, Index dilation, Rng& rng, Options opts = Options());
  std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode);
  Var forward_one(Binder& b, Var x, Mode mode);

  Parameter* weight() const { return weight_; }
  Parameter* bias() const { return bias_; }
  Index out_channels() const { return out_channels_; }

 private:
  Index out_channels_, dilation_;
  Parameter *weight_, *bias_;
  std::optional<BatchNorm1d> bn_;
  bool use_relu_;
};

// One LSTM direction.  Gate rows stack as (input, forget, cell, output);
// the forget-gate bias starts at 1, everything else uniform in [-1/sqrt(h), 1/sqrt(h)].
class LstmCell {
 public:
  LstmCell(ParamStore& store, const std::string& prefix, Index input_dim, Index hidden, Rng& rng);
  // d x T -> h x T.  reverse runs the recurrence on the time-reversed
  // sequence and re-reverses the result.
  Var forward(Binder& b, Var x, bool reverse) const;
  Index hidden() const { return hidden_; }

 private:
  Index hidden_;
  Parameter *wx_, *wh_, *bias_;
};

// Concatenated forward and reverse LSTM: d x T -> 2h x T.
class BiLstm {
 public:
  BiLstm(ParamStore& store, const std::string& prefix, Index input_dim, Index hidden, Rng& rng);
  Var forward(Binder& b, Var x) const;
  Index hidden() const { return fwd_.hidden(); }

 private:
  LstmCell fwd_, rev_;
};

// Attentive statistics pooling with global context: attention logits come
// from a two-layer projection over [x_t ; mean(x) ; std(x)], softmax over
// time per channel, output is [weighted mean ; weighted std] of length 2C.
class AttentiveStatPool {
 public:
  AttentiveStatPool(ParamStore& store, const std::string& prefix, Index channels, Index attn_dim,
                    Rng& rng);
  Var forward(Binder& b, Var x) const;
  // Attention weights for a given input (for invariant tests).
  Tensor attention(const Tensor& x) const;

 private:
  Index channels_;
  Parameter *w1_, *b1_, *w2_, *b2_;
};

}  // namespace res2ctx
