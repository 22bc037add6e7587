// res2ctx/nn.cpp

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

#include "res2ctx/nn.hpp"

#include <cmath>

namespace res2ctx {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

void ParamStore::check_fresh(const std::string& name) const {
  RC_CHECK(by_name_.find(name) == by_name_.end(), "duplicate parameter name '" << name << "'");
}

Parameter* ParamStore::create(const std::string& name, std::vector<Index> shape, Rng& rng,
                              double bound) {
  check_fresh(name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor::rand_uniform(std::move(shape), rng, -bound, bound);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  entries_.push_back({name, &raw->value, true});
  by_name_.emplace(name, raw);
  return raw;
}

Parameter* ParamStore::create_const(const std::string& name, std::vector<Index> shape,
                                    double fill) {
  check_fresh(name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor::full(std::move(shape), fill);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  entries_.push_back({name, &raw->value, true});
  by_name_.emplace(name, raw);
  return raw;
}

Tensor* ParamStore::create_buffer(const std::string& name, std::vector<Index> shape, double fill) {
  check_fresh(name);
  auto t = std::make_unique<Tensor>(Tensor::full(std::move(shape), fill));
  Tensor* raw = t.get();
  buffers_.push_back(std::move(t));
  entries_.push_back({name, raw, false});
  by_name_.emplace(name, nullptr);  // reserve the name
  return raw;
}

Parameter* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

int64_t ParamStore::count(const std::string& exclude_prefix) const {
  int64_t total = 0;
  for (const auto& p : params_) {
    if (!exclude_prefix.empty() && p->name.rfind(exclude_prefix, 0) == 0) continue;
    total += p->value.size();
  }
  return total;
}

void ParamStore::zero_grads() {
  for (const auto& p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// SeBlock
// ---------------------------------------------------------------------------

SeBlock::SeBlock(ParamStore& store, const std::string& prefix, Index channels, Index bottleneck,
                 Rng& rng)
    : channels_(channels) {
  RC_CHECK(bottleneck >= 1 && bottleneck < channels,
           "SE bottleneck must compress: got " << bottleneck << " for " << channels
                                               << " channels");
  const double bound_in = 1.0 / std::sqrt(static_cast<double>(channels));
  const double bound_mid = 1.0 / std::sqrt(static_cast<double>(bottleneck));
  squeeze_w_ = store.create(prefix + ".squeeze.weight", {bottleneck, channels}, rng, bound_in);
  squeeze_b_ = store.create(prefix + ".squeeze.bias", {bottleneck}, rng, bound_in);
  excite_w_ = store.create(prefix + ".excite.weight", {channels, bottleneck}, rng, bound_mid);
  excite_b_ = store.create(prefix + ".excite.bias", {channels}, rng, bound_mid);
}

Var SeBlock::forward(Binder& b, Var x) const {
  const Tensor& xv = b.g.value(x);
  RC_CHECK(xv.rank() == 2 && xv.dim(0) == channels_,
           "SE block expects " << channels_ << " channels, got " << shape_str(xv.shape()));
  const Index frames = xv.dim(1);
  Var pooled = mean_time(x);
  Var hidden = relu(affine(b(squeeze_w_), pooled, b(squeeze_b_)));
  Var gates = sigmoid(affine(b(excite_w_), hidden, b(excite_b_)));
  return mul(x, broadcast_time(gates, frames));
}

// ---------------------------------------------------------------------------
// BatchNorm1d
// ---------------------------------------------------------------------------

BatchNorm1d::BatchNorm1d(ParamStore& store, const std::string& prefix, Index channels,
                         double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = store.create_const(prefix + ".gamma", {channels}, 1.0);
  beta_ = store.create_const(prefix + ".beta", {channels}, 0.0);
  running_mean_ = store.create_buffer(prefix + ".running_mean", {channels}, 0.0);
  running_var_ = store.create_buffer(prefix + ".running_var", {channels}, 1.0);
}

std::vector<Var> BatchNorm1d::forward(Binder& b, const std::vector<Var>& xs, Mode mode) {
  RC_CHECK(!xs.empty(), "batch norm on an empty batch");
  std::vector<Index> frames;
  for (Var x : xs) {
    const Tensor& xv = b.g.value(x);
    RC_CHECK(xv.rank() == 2 && xv.dim(0) == channels_,
             "batch norm expects " << channels_ << " channels, got " << shape_str(xv.shape()));
    frames.push_back(xv.dim(1));
  }
  Var gamma = b(gamma_);
  Var beta = b(beta_);

  std::vector<Var> outs;
  if (mode == Mode::kEval) {
    Var inv = rsqrt(add_scalar(b.g.constant(*running_var_), eps_));
    Var shift = b.g.constant(*running_mean_);
    for (size_t i = 0; i < xs.size(); ++i) {
      const Index t = frames[i];
      Var normalized = mul(sub(xs[i], broadcast_time(shift, t)), broadcast_time(inv, t));
      outs.push_back(add(mul(normalized, broadcast_time(gamma, t)), broadcast_time(beta, t)));
    }
    return outs;
  }

  // Train: joint statistics over every frame of every batch item.
  Var joined = xs.size() == 1 ? xs[0] : concat_time(xs);
  const Index total = b.g.value(joined).dim(1);
  Var mean = mean_time(joined);
  Var centered = sub(joined, broadcast_time(mean, total));
  Var variance = mean_time(square(centered));  // population convention
  Var inv = rsqrt(add_scalar(variance, eps_));
  Var normalized = mul(centered, broadcast_time(inv, total));
  Var scaled = add(mul(normalized, broadcast_time(gamma, total)), broadcast_time(beta, total));

  // Side effect outside the tape: running <- (1-momentum)*running + momentum*batch.
  running_mean_->flat() =
      (1.0 - momentum_) * running_mean_->flat() + momentum_ * b.g.value(mean).flat();
  running_var_->flat() =
      (1.0 - momentum_) * running_var_->flat() + momentum_ * b.g.value(variance).flat();

  if (xs.size() == 1) return {scaled};
  Index at = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    outs.push_back(slice_time(scaled, at, frames[i]));
    at += frames[i];
  }
  return outs;
}

Var BatchNorm1d::forward_one(Binder& b, Var x, Mode mode) { return forward(b, {x}, mode)[0]; }

// ---------------------------------------------------------------------------
// ConvBnRelu
// ---------------------------------------------------------------------------

ConvBnRelu::ConvBnRelu(ParamStore& store, const std::string& prefix, Index in_channels,
                       Index out_channels, Index kernel, Index dilation, Rng& rng, Options opts)
    : out_channels_(out_channels), dilation_(dilation), use_relu_(opts.use_relu) {
  RC_CHECK(kernel % 2 == 1, "conv kernel size must be odd, got " << kernel);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel));
  weight_ = store.create(prefix + ".conv.weight", {out_channels, in_channels, kernel}, rng, bound);
  bias_ = store.create(prefix + ".conv.bias", {out_channels}, rng, bound);
  if (opts.use_bn) bn_.emplace(store, prefix + ".bn", out_channels);
}

std::vector<Var> ConvBnRelu::forward(Binder& b, const std::vector<Var>& xs, Mode mode) {
  std::vector<Var> hs;
  hs.reserve(xs.size());
  Var w = b(weight_);
  Var bias = b(bias_);
  for (Var x : xs) hs.push_back(conv1d(x, w, bias, dilation_));
  if (bn_) hs = bn_->forward(b, hs, mode);
  if (use_relu_) {
    for (Var& h : hs) h = relu(h);
  }
  return hs;
}

Var ConvBnRelu::forward_one(Binder& b, Var x, Mode mode) { return forward(b, {x}, mode)[0]; }

// ---------------------------------------------------------------------------
// LstmCell / BiLstm
// ---------------------------------------------------------------------------

LstmCell::LstmCell(ParamStore& store, const std::string& prefix, Index input_dim, Index hidden,
                   Rng& rng)
    : hidden_(hidden) {
  RC_CHECK(hidden >= 1, "LSTM hidden size must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx_ = store.create(prefix + ".wx", {4 * hidden, input_dim}, rng, bound);
  wh_ = store.create(prefix + ".wh", {4 * hidden, hidden}, rng, bound);
  bias_ = store.create(prefix + ".bias", {4 * hidden}, rng, bound);
  // Forget-gate bias starts open.
  for (Index i = hidden; i < 2 * hidden; ++i) bias_->value.at(i) = 1.0;
}

Var LstmCell::forward(Binder& b, Var x, bool reverse) const {
  const Tensor& xv = b.g.value(x);
  RC_CHECK(xv.rank() == 2 && xv.dim(1) >= 1, "LSTM needs a non-empty sequence");
  return lstm_seq(x, b(wx_), b(wh_), b(bias_), reverse);
}

BiLstm::BiLstm(ParamStore& store, const std::string& prefix, Index input_dim, Index hidden,
               Rng& rng)
    : fwd_(store, prefix + ".fwd", input_dim, hidden, rng),
      rev_(store, prefix + ".rev", input_dim, hidden, rng) {}

Var BiLstm::forward(Binder& b, Var x) const {
  RC_CHECK(fwd_.hidden() == rev_.hidden(), "BiLSTM directions must share the hidden size");
  return concat_channels({fwd_.forward(b, x, false), rev_.forward(b, x, true)});
}

// ---------------------------------------------------------------------------
// AttentiveStatPool
// ---------------------------------------------------------------------------

AttentiveStatPool::AttentiveStatPool(ParamStore& store, const std::string& prefix, Index channels,
                                     Index attn_dim, Rng& rng)
    : channels_(channels) {
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(3 * channels));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(attn_dim));
  w1_ = store.create(prefix + ".attn1.weight", {attn_dim, 3 * channels}, rng, bound1);
  b1_ = store.create(prefix + ".attn1.bias", {attn_dim}, rng, bound1);
  w2_ = store.create(prefix + ".attn2.weight", {channels, attn_dim}, rng, bound2);
  b2_ = store.create(prefix + ".attn2.bias", {channels}, rng, bound2);
}

Var AttentiveStatPool::forward(Binder& b, Var x) const {
  const Tensor& xv = b.g.value(x);
  RC_CHECK(xv.rank() == 2 && xv.dim(0) == channels_,
           "pooling expects " << channels_ << " channels, got " << shape_str(xv.shape()));
  const Index t = xv.dim(1);
  RC_CHECK(t >= 1, "pooling needs at least one frame");

  Var context = concat_channels({x, broadcast_time(mean_time(x), t),
                                 broadcast_time(std_time(x), t)});
  Var hidden = tanh(add(matmul(b(w1_), context), broadcast_time(b(b1_), t)));
  Var logits = add(matmul(b(w2_), hidden), broadcast_time(b(b2_), t));
  Var attn = softmax_time(logits);

  Var weighted_mean = sum_time(mul(attn, x));
  Var weighted_sq = sum_time(mul(attn, square(x)));
  Var variance = clamp_min(sub(weighted_sq, square(weighted_mean)), kVarianceEps);
  Var weighted_std = sqrt(variance);
  return reshape(concat_channels({reshape(weighted_mean, {channels_, 1}),
                                  reshape(weighted_std, {channels_, 1})}),
                 {2 * channels_});
}

Tensor AttentiveStatPool::attention(const Tensor& x) const {
  Graph g;
  Binder b(g);
  Var xv = g.constant(x);
  const Index t = x.dim(1);
  Var context = concat_channels({xv, broadcast_time(mean_time(xv), t),
                                 broadcast_time(std_time(xv), t)});
  Var hidden = tanh(add(matmul(g.constant(w1_->value), context),
                        broadcast_time(g.constant(b1_->value), t)));
  Var logits = add(matmul(g.constant(w2_->value), hidden),
                   broadcast_time(g.constant(b2_->value), t));
  return g.value(softmax_time(logits));
}

}  // namespace res2ctx
