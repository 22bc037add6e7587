// res2ctx/graph.hpp

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

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "res2ctx/tensor.hpp"

namespace res2ctx {

class Graph;

// Named learnable tensor.  Gradients accumulate into `grad` when a graph
// that binds the parameter runs backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // allocated on first accumulation

  void ensure_grad() {
    if (grad.empty()) grad = Tensor::zeros(value.shape());
  }
  void zero_grad() {
    if (!grad.empty()) grad.set_zero();
  }
};

// Lightweight handle to a node inside a Graph.
class Var {
 public:
  Var() = default;
  Graph* graph() const { return g_; }
  int id() const { return id_; }
  bool valid() const { return g_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  int id_ = -1;
};

// Eagerly evaluated tape for reverse-mode differentiation.  Nodes are
// appended in execution order, so reverse iteration is a valid topological
// backward sweep.  One graph instance is single-threaded; forward kernels
// themselves are pure and safe to run concurrently on separate graphs.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var self, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf without gradient tracking.
  Var constant(Tensor value) { return make("constant", std::move(value), {}, nullptr, false); }

  // Leaf; set requires_grad to query grad() afterwards.
  Var input(Tensor value, bool requires_grad = false) {
    return make("input", std::move(value), {}, nullptr, requires_grad);
  }

  // Leaf bound to a parameter: its value is a snapshot of p.value and
  // backward accumulates into p.grad.
  Var param(Parameter& p);

  // Appends a node.  `requires_grad` of the result is inferred from inputs
  // unless forced. Every op's output is checked finite; NaN/Inf surfaces as
  // a NumericError rather than propagating.
  Var make(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward,
           bool force_requires_grad = false);

  const Tensor& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }

  // Gradient buffer of a node, zero until seeded/accumulated.
  Tensor& grad_mut(Var v) {
    NodeRec& n = node(v);
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
  }
  const Tensor& grad(Var v) const {
    static const Tensor kEmpty;
    const NodeRec& n = node(v);
    return n.grad.empty() ? kEmpty : n.grad;
  }

  // Reverse sweep from the graph output (the most recently created node).
  // Seeding any other node is an error, as is a second sweep without
  // reset_grads().  The default seed is 1 for a scalar output.
  void backward(Var output);
  void backward(Var output, const Tensor& seed);
  void reset_grads();

 private:
  struct NodeRec {
    const char* op;
    Tensor value;
    Tensor grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  NodeRec& node(Var v) {
    RC_CHECK(v.valid() && v.graph() == this && v.id() >= 0 &&
                 v.id() < static_cast<int>(nodes_.size()),
             "Var does not belong to this graph");
    return nodes_[static_cast<size_t>(v.id())];
  }
  const NodeRec& node(Var v) const { return const_cast<Graph*>(this)->node(v); }

  // Deque keeps value()/grad() references stable while new nodes append.
  std::deque<NodeRec> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Primitive ops.  Free functions so composite expressions read naturally:
//   auto y = relu(conv1d(x, k, b, d) + broadcast_time(bias, T));
// All ops validate shapes and surface NaN/Inf as NumericError.
// ---------------------------------------------------------------------------

// Elementwise unary.
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);
Var rsqrt(Var x);
Var square(Var x);
Var neg(Var x);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var clamp_min(Var x, double c);

// Elementwise binary (equal shapes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Dense linear algebra.
Var matmul(Var a, Var b);      // (m,n)x(n,p) -> (m,p)
Var transpose(Var a);          // (m,n) -> (n,m)
Var affine(Var weight, Var x, Var bias);  // (m,n)*(n) + (m) -> (m)

// Same-length 1-D convolution over a channels-by-frames map, cross-correlation
// convention with zero padding dilation*(k-1)/2 on each side:
//   out[o,t] = bias[o] + sum_{c,j} kernels[o,c,j] * in[c, t + dilation*(j-(k-1)/2)]
Var conv1d(Var input, Var kernels, Var bias, Index dilation);

// Single-direction LSTM over a d-by-T map seen as T steps of d-dim vectors.
// Gate rows of wx/wh/bias are stacked (input, forget, cell, output); h0=c0=0.
// reverse=true processes the time-reversed sequence and re-reverses the
// output, so column t of the result always corresponds to input column t.
Var lstm_seq(Var x, Var wx, Var wh, Var bias, bool reverse);

// Shape ops over rank-2 maps (rows = channels, cols = frames).
Var slice_channels(Var x, Index begin, Index count);
Var concat_channels(const std::vector<Var>& xs);
Var flip_channels(Var x);
Var slice_time(Var x, Index begin, Index count);
Var concat_time(const std::vector<Var>& xs);
Var broadcast_time(Var v, Index frames);  // rank-1 C -> C x frames
Var stack_rows(const std::vector<Var>& vs);  // B rank-1 vectors (D) -> B x D
Var reshape(Var x, std::vector<Index> shape);

// Evenly partitions the rows of a C-by-T map into n subsets of C/n channels,
// in order; concat_channels inverts it.
std::vector<Var> split_channels(Var x, Index n);

// Reductions.
Var sum_time(Var x);   // C x T -> C
Var mean_time(Var x);  // C x T -> C
Var max_time(Var x);   // C x T -> C
Var sum_all(Var x);    // -> scalar
Var mean_all(Var x);   // -> scalar

// Population standard deviation over time with the variance clamped at
// kVarianceEps before the square root (constant rows give sqrt(eps)).
inline constexpr double kVarianceEps = 1e-8;
Var std_time(Var x);  // C x T -> C

// Row-wise softmax over time (per channel).
Var softmax_time(Var x);

// Mean cross-entropy of row-wise logits against integer labels, computed with
// a stable log-sum-exp.  logits is B x K, labels has B entries in [0, K).
Var cross_entropy_logits(Var logits, const std::vector<int>& labels);

}  // namespace res2ctx
