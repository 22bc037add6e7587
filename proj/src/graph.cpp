// res2ctx/graph.cpp

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

#include "res2ctx/graph.hpp"

#include <cmath>
#include <memory>
#include <utility>

namespace res2ctx {

namespace {

Graph& graph_of(Var a) {
  RC_CHECK(a.valid(), "op applied to an invalid Var");
  return *a.graph();
}

Graph& same_graph(Var a, Var b) {
  Graph& g = graph_of(a);
  RC_CHECK(b.valid() && b.graph() == &g, "operands belong to different graphs");
  return g;
}

void check_rank2(const Tensor& t, const char* who) {
  RC_CHECK(t.rank() == 2, who << " needs a rank-2 tensor, got " << shape_str(t.shape()));
}

using StridedConstMap = Eigen::Map<const Mat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using StridedMap = Eigen::Map<Mat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

// View of tap j of a (C_out, C_in, k) kernel bank as a C_out-by-C_in matrix.
StridedConstMap kernel_tap(const Tensor& ker, Index j) {
  const Index c_in = ker.dim(1), k = ker.dim(2);
  return StridedConstMap(ker.data() + j, ker.dim(0), c_in,
                         Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(c_in * k, k));
}

StridedMap kernel_tap_mut(Tensor& ker, Index j) {
  const Index c_in = ker.dim(1), k = ker.dim(2);
  return StridedMap(ker.data() + j, ker.dim(0), c_in,
                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(c_in * k, k));
}

}  // namespace

Var Graph::make(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward,
                bool force_requires_grad) {
  RC_CHECK(!value.empty(), "op '" << op << "' produced an empty tensor");
  RC_CHECK_FINITE(value.all_finite(), "non-finite values in the output of op '" << op << "'");
  bool req = force_requires_grad;
  for (Var v : inputs) {
    if (node(v).requires_grad) req = true;
  }
  NodeRec rec;
  rec.op = op;
  rec.value = std::move(value);
  rec.inputs = std::move(inputs);
  rec.backward = req ? std::move(backward) : nullptr;
  rec.requires_grad = req;
  nodes_.push_back(std::move(rec));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
  RC_CHECK(!p.value.empty(), "parameter '" << p.name << "' has no value");
  Parameter* pp = &p;
  return make(
      "param", p.value, {},
      [pp](Graph&, Var, const Tensor& gy) {
        pp->ensure_grad();
        pp->grad.flat() += gy.flat();
      },
      true);
}

void Graph::backward(Var output) {
  const NodeRec& out = node(output);
  RC_CHECK(out.value.size() == 1,
           "default backward seed needs a scalar output, got " << shape_str(out.value.shape()));
  backward(output, Tensor::full(out.value.shape(), 1.0));
}

void Graph::backward(Var output, const Tensor& seed) {
  RC_CHECK(!backward_done_, "repeated backward without reset_grads()");
  NodeRec& out = node(output);
  RC_CHECK(output.id() == static_cast<int>(nodes_.size()) - 1,
           "backward must be seeded at the graph output (the most recent node)");
  RC_CHECK(seed.same_shape(out.value), "backward seed shape " << shape_str(seed.shape())
                                                              << " does not match the output "
                                                              << shape_str(out.value.shape()));
  grad_mut(output).flat() += seed.flat();
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    NodeRec& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, Var(this, id), n.grad);
  }
  backward_done_ = true;
}

void Graph::reset_grads() {
  for (NodeRec& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------------

Var relu(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().max(0.0);
  return g.make("relu", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat() * (g.value(x).flat() > 0.0).cast<double>();
  });
}

Var sigmoid(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = 1.0 / (1.0 + (-g.value(x).flat()).exp());
  return g.make("sigmoid", std::move(out), {x}, [x](Graph& g, Var self, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    const auto y = g.value(self).flat();
    g.grad_mut(x).flat() += gy.flat() * y * (1.0 - y);
  });
}

Var tanh(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().tanh();
  return g.make("tanh", std::move(out), {x}, [x](Graph& g, Var self, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    const auto y = g.value(self).flat();
    g.grad_mut(x).flat() += gy.flat() * (1.0 - y * y);
  });
}

Var exp(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().exp();
  return g.make("exp", std::move(out), {x}, [x](Graph& g, Var self, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat() * g.value(self).flat();
  });
}

Var log(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().log();
  return g.make("log", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat() / g.value(x).flat();
  });
}

Var sqrt(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().sqrt();
  return g.make("sqrt", std::move(out), {x}, [x](Graph& g, Var self, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    // Floor keeps the subgradient finite at 0 (upstream clamps decide the flow).
    g.grad_mut(x).flat() += gy.flat() / (2.0 * g.value(self).flat().max(1e-12));
  });
}

Var rsqrt(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().rsqrt();
  return g.make("rsqrt", std::move(out), {x}, [x](Graph& g, Var self, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    const auto y = g.value(self).flat();
    g.grad_mut(x).flat() += gy.flat() * (-0.5) * y * y * y;
  });
}

Var square(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().square();
  return g.make("square", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat() * 2.0 * g.value(x).flat();
  });
}

Var neg(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = -g.value(x).flat();
  return g.make("neg", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() -= gy.flat();
  });
}

Var scale(Var x, double c) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = c * g.value(x).flat();
  return g.make("scale", std::move(out), {x}, [x, c](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += c * gy.flat();
  });
}

Var add_scalar(Var x, double c) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat() + c;
  return g.make("add_scalar", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat();
  });
}

Var clamp_min(Var x, double c) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::zeros(g.value(x).shape());
  out.flat() = g.value(x).flat().max(c);
  return g.make("clamp_min", std::move(out), {x}, [x, c](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat() * (g.value(x).flat() > c).cast<double>();
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary
// ---------------------------------------------------------------------------

namespace {
void check_same_shape(Graph& g, Var a, Var b, const char* who) {
  RC_CHECK(g.value(a).same_shape(g.value(b)),
           who << ": shape mismatch " << shape_str(g.value(a).shape()) << " vs "
               << shape_str(g.value(b).shape()));
}
}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(g, a, b, "add");
  Tensor out = Tensor::zeros(g.value(a).shape());
  out.flat() = g.value(a).flat() + g.value(b).flat();
  return g.make("add", std::move(out), {a, b}, [a, b](Graph& g, Var, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_mut(a).flat() += gy.flat();
    if (g.requires_grad(b)) g.grad_mut(b).flat() += gy.flat();
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(g, a, b, "sub");
  Tensor out = Tensor::zeros(g.value(a).shape());
  out.flat() = g.value(a).flat() - g.value(b).flat();
  return g.make("sub", std::move(out), {a, b}, [a, b](Graph& g, Var, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_mut(a).flat() += gy.flat();
    if (g.requires_grad(b)) g.grad_mut(b).flat() -= gy.flat();
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  check_same_shape(g, a, b, "mul");
  Tensor out = Tensor::zeros(g.value(a).shape());
  out.flat() = g.value(a).flat() * g.value(b).flat();
  return g.make("mul", std::move(out), {a, b}, [a, b](Graph& g, Var, const Tensor& gy) {
    if (g.requires_grad(a)) g.grad_mut(a).flat() += gy.flat() * g.value(b).flat();
    if (g.requires_grad(b)) g.grad_mut(b).flat() += gy.flat() * g.value(a).flat();
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  check_rank2(av, "matmul lhs");
  check_rank2(bv, "matmul rhs");
  RC_CHECK(av.dim(1) == bv.dim(0), "matmul: inner dimensions disagree, "
                                       << shape_str(av.shape()) << " x " << shape_str(bv.shape()));
  Tensor out({av.dim(0), bv.dim(1)});
  out.mat().noalias() = av.mat() * bv.mat();
  return g.make("matmul", std::move(out), {a, b}, [a, b](Graph& g, Var, const Tensor& gy) {
    if (g.requires_grad(a)) {
      auto ga = g.grad_mut(a).mat();
      ga.noalias() += gy.mat() * g.value(b).mat().transpose();
    }
    if (g.requires_grad(b)) {
      auto gb = g.grad_mut(b).mat();
      gb.noalias() += g.value(a).mat().transpose() * gy.mat();
    }
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const Tensor& av = g.value(a);
  check_rank2(av, "transpose");
  Tensor out({av.dim(1), av.dim(0)});
  out.mat() = av.mat().transpose();
  return g.make("transpose", std::move(out), {a}, [a](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(a)) return;
    g.grad_mut(a).mat() += gy.mat().transpose();
  });
}

Var affine(Var weight, Var x, Var bias) {
  Graph& g = same_graph(weight, x);
  same_graph(weight, bias);
  const Tensor& wv = g.value(weight);
  const Tensor& xv = g.value(x);
  const Tensor& bv = g.value(bias);
  check_rank2(wv, "affine weight");
  RC_CHECK(xv.rank() == 1 && bv.rank() == 1, "affine expects rank-1 input and bias");
  RC_CHECK(wv.dim(1) == xv.dim(0) && wv.dim(0) == bv.dim(0),
           "affine: shape mismatch, weight " << shape_str(wv.shape()) << ", input "
                                             << shape_str(xv.shape()) << ", bias "
                                             << shape_str(bv.shape()));
  Tensor out({wv.dim(0)});
  out.vec().noalias() = wv.mat() * xv.vec() + bv.vec();
  return g.make("affine", std::move(out), {weight, x, bias},
                [weight, x, bias](Graph& g, Var, const Tensor& gy) {
                  if (g.requires_grad(weight)) {
                    auto gw = g.grad_mut(weight).mat();
                    gw.noalias() += gy.vec() * g.value(x).vec().transpose();
                  }
                  if (g.requires_grad(x)) {
                    auto gx = g.grad_mut(x).vec();
                    gx.noalias() += g.value(weight).mat().transpose() * gy.vec();
                  }
                  if (g.requires_grad(bias)) g.grad_mut(bias).vec() += gy.vec();
                });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Var conv1d(Var input, Var kernels, Var bias, Index dilation) {
  Graph& g = same_graph(input, kernels);
  same_graph(input, bias);
  const Tensor& in = g.value(input);
  const Tensor& ker = g.value(kernels);
  const Tensor& bv = g.value(bias);
  check_rank2(in, "conv1d input");
  RC_CHECK(ker.rank() == 3, "conv1d kernels need shape (out, in, k), got " << shape_str(ker.shape()));
  RC_CHECK(bv.rank() == 1 && bv.dim(0) == ker.dim(0),
           "conv1d bias must have one entry per output channel");
  RC_CHECK(ker.dim(1) == in.dim(0), "conv1d: kernel input channels " << ker.dim(1)
                                        << " vs input channels " << in.dim(0));
  const Index k = ker.dim(2);
  RC_CHECK(k % 2 == 1, "conv1d kernel size must be odd, got " << k);
  RC_CHECK(dilation >= 1, "conv1d dilation must be positive, got " << dilation);

  const Index t_len = in.dim(1);
  const Index c_out = ker.dim(0);
  Tensor out({c_out, t_len});
  auto om = out.mat();
  om.noalias() = bv.vec() * Eigen::RowVectorXd::Ones(t_len);
  const Index center = (k - 1) / 2;
  for (Index j = 0; j < k; ++j) {
    const Index off = dilation * (j - center);
    const auto tap = kernel_tap(ker, j);
    if (off >= 0) {
      const Index len = t_len - off;
      if (len > 0) om.leftCols(len).noalias() += tap * in.mat().middleCols(off, len);
    } else {
      const Index len = t_len + off;
      if (len > 0) om.middleCols(-off, len).noalias() += tap * in.mat().leftCols(len);
    }
  }
  return g.make(
      "conv1d", std::move(out), {input, kernels, bias},
      [input, kernels, bias, dilation](Graph& g, Var, const Tensor& gy) {
        const Tensor& in = g.value(input);
        const Tensor& ker = g.value(kernels);
        const Index k = ker.dim(2);
        const Index center = (k - 1) / 2;
        const Index t_len = in.dim(1);
        if (g.requires_grad(bias)) g.grad_mut(bias).vec() += gy.mat().rowwise().sum();
        for (Index j = 0; j < k; ++j) {
          const Index off = dilation * (j - center);
          const Index lo = off >= 0 ? 0 : -off;          // first valid output frame
          const Index len = t_len - (off >= 0 ? off : -off);
          if (len <= 0) continue;
          const Index in_lo = lo + off;                  // aligned input frame
          if (g.requires_grad(kernels)) {
            auto gk = kernel_tap_mut(g.grad_mut(kernels), j);
            gk.noalias() +=
                gy.mat().middleCols(lo, len) * in.mat().middleCols(in_lo, len).transpose();
          }
          if (g.requires_grad(input)) {
            auto gi = g.grad_mut(input).mat();
            gi.middleCols(in_lo, len).noalias() +=
                kernel_tap(ker, j).transpose() * gy.mat().middleCols(lo, len);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {
struct LstmSaved {
  Eigen::MatrixXd in_gate, forget_gate, cell_gate, out_gate;  // h x T, by step
  Eigen::MatrixXd cell, tanh_cell;                            // h x T, by step
};
}  // namespace

Var lstm_seq(Var x, Var wx, Var wh, Var bias, bool reverse) {
  Graph& g = same_graph(x, wx);
  same_graph(x, wh);
  same_graph(x, bias);
  const Tensor& xv = g.value(x);
  const Tensor& wxv = g.value(wx);
  const Tensor& whv = g.value(wh);
  const Tensor& bv = g.value(bias);
  check_rank2(xv, "lstm input");
  check_rank2(wxv, "lstm wx");
  check_rank2(whv, "lstm wh");
  RC_CHECK(wxv.dim(0) % 4 == 0, "lstm wx rows must stack 4 gates");
  const Index h = wxv.dim(0) / 4;
  const Index d = wxv.dim(1);
  const Index t_len = xv.dim(1);
  RC_CHECK(xv.dim(0) == d, "lstm: input dim " << xv.dim(0) << " vs wx columns " << d);
  RC_CHECK(whv.dim(0) == 4 * h && whv.dim(1) == h, "lstm wh must be (4h, h)");
  RC_CHECK(bv.rank() == 1 && bv.dim(0) == 4 * h, "lstm bias must be (4h)");

  auto saved = std::make_shared<LstmSaved>();
  saved->in_gate.resize(h, t_len);
  saved->forget_gate.resize(h, t_len);
  saved->cell_gate.resize(h, t_len);
  saved->out_gate.resize(h, t_len);
  saved->cell.resize(h, t_len);
  saved->tanh_cell.resize(h, t_len);

  const Eigen::MatrixXd xc = xv.mat();  // column-major copy for sequential access
  const Eigen::MatrixXd wxm = wxv.mat();
  const Eigen::MatrixXd whm = whv.mat();
  const Eigen::VectorXd bvec = bv.vec();

  Tensor out({h, t_len});
  Eigen::MatrixXd out_c(h, t_len);
  Eigen::VectorXd h_state = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd c_state = Eigen::VectorXd::Zero(h);
  for (Index s = 0; s < t_len; ++s) {
    const Index col = reverse ? t_len - 1 - s : s;
    Eigen::VectorXd pre = wxm * xc.col(col) + bvec;
    if (s > 0) pre.noalias() += whm * h_state;
    const auto ig = (1.0 / (1.0 + (-pre.segment(0, h).array()).exp())).matrix();
    const auto fg = (1.0 / (1.0 + (-pre.segment(h, h).array()).exp())).matrix();
    const auto cg = pre.segment(2 * h, h).array().tanh().matrix();
    const auto og = (1.0 / (1.0 + (-pre.segment(3 * h, h).array()).exp())).matrix();
    c_state = fg.cwiseProduct(c_state) + ig.cwiseProduct(cg);
    const Eigen::VectorXd tc = c_state.array().tanh();
    h_state = og.cwiseProduct(tc);
    saved->in_gate.col(s) = ig;
    saved->forget_gate.col(s) = fg;
    saved->cell_gate.col(s) = cg;
    saved->out_gate.col(s) = og;
    saved->cell.col(s) = c_state;
    saved->tanh_cell.col(s) = tc;
    out_c.col(col) = h_state;
  }
  out.mat() = out_c;

  return g.make(
      "lstm", std::move(out), {x, wx, wh, bias},
      [x, wx, wh, bias, reverse, h, d, t_len, saved](Graph& g, Var self, const Tensor& gy) {
        const Eigen::MatrixXd xc = g.value(x).mat();
        const Eigen::MatrixXd wxm = g.value(wx).mat();
        const Eigen::MatrixXd whm = g.value(wh).mat();
        const Eigen::MatrixXd hc = g.value(self).mat();
        const Eigen::MatrixXd gyc = gy.mat();

        Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(d, t_len);
        Eigen::MatrixXd gwx = Eigen::MatrixXd::Zero(4 * h, d);
        Eigen::MatrixXd gwh = Eigen::MatrixXd::Zero(4 * h, h);
        Eigen::VectorXd gb = Eigen::VectorXd::Zero(4 * h);
        Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(h);
        Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(h);
        Eigen::VectorXd da(4 * h);
        for (Index s = t_len - 1; s >= 0; --s) {
          const Index col = reverse ? t_len - 1 - s : s;
          const Eigen::ArrayXd dh = gyc.col(col).array() + dh_carry.array();
          const auto ig = saved->in_gate.col(s).array();
          const auto fg = saved->forget_gate.col(s).array();
          const auto cg = saved->cell_gate.col(s).array();
          const auto og = saved->out_gate.col(s).array();
          const auto tc = saved->tanh_cell.col(s).array();
          const Eigen::ArrayXd dc = dc_carry.array() + dh * og * (1.0 - tc * tc);
          const Eigen::ArrayXd da_o = dh * tc * og * (1.0 - og);
          Eigen::ArrayXd da_f;
          if (s > 0) {
            da_f = dc * saved->cell.col(s - 1).array() * fg * (1.0 - fg);
          } else {
            da_f = Eigen::ArrayXd::Zero(h);  // c_{-1} = 0
          }
          const Eigen::ArrayXd da_i = dc * cg * ig * (1.0 - ig);
          const Eigen::ArrayXd da_g = dc * ig * (1.0 - cg * cg);
          da.segment(0, h) = da_i.matrix();
          da.segment(h, h) = da_f.matrix();
          da.segment(2 * h, h) = da_g.matrix();
          da.segment(3 * h, h) = da_o.matrix();
          gwx.noalias() += da * xc.col(col).transpose();
          if (s > 0) {
            const Index prev_col = reverse ? t_len - s : s - 1;
            gwh.noalias() += da * hc.col(prev_col).transpose();
            dh_carry.noalias() = whm.transpose() * da;
          }
          gb += da;
          gx.col(col).noalias() = wxm.transpose() * da;
          dc_carry = (dc * fg).matrix();
        }
        if (g.requires_grad(x)) g.grad_mut(x).mat() += gx;
        if (g.requires_grad(wx)) g.grad_mut(wx).mat() += gwx;
        if (g.requires_grad(wh)) g.grad_mut(wh).mat() += gwh;
        if (g.requires_grad(bias)) g.grad_mut(bias).vec() += gb;
      });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Var slice_channels(Var x, Index begin, Index count) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "slice_channels");
  RC_CHECK(begin >= 0 && count >= 1 && begin + count <= xv.dim(0),
           "slice_channels: rows [" << begin << ", " << begin + count << ") out of "
                                    << xv.dim(0));
  Tensor out({count, xv.dim(1)});
  out.mat() = xv.mat().middleRows(begin, count);
  return g.make("slice_channels", std::move(out), {x},
                [x, begin, count](Graph& g, Var, const Tensor& gy) {
                  if (!g.requires_grad(x)) return;
                  g.grad_mut(x).mat().middleRows(begin, count) += gy.mat();
                });
}

Var concat_channels(const std::vector<Var>& xs) {
  RC_CHECK(!xs.empty(), "concat_channels: no inputs");
  Graph& g = graph_of(xs[0]);
  Index rows = 0;
  const Index t_len = g.value(xs[0]).dim(1);
  for (Var v : xs) {
    same_graph(xs[0], v);
    check_rank2(g.value(v), "concat_channels");
    RC_CHECK(g.value(v).dim(1) == t_len, "concat_channels: frame counts differ");
    rows += g.value(v).dim(0);
  }
  Tensor out({rows, t_len});
  Index at = 0;
  for (Var v : xs) {
    const Index r = g.value(v).dim(0);
    out.mat().middleRows(at, r) = g.value(v).mat();
    at += r;
  }
  return g.make("concat_channels", std::move(out), xs, [xs](Graph& g, Var, const Tensor& gy) {
    Index at = 0;
    for (Var v : xs) {
      const Index r = g.value(v).dim(0);
      if (g.requires_grad(v)) g.grad_mut(v).mat() += gy.mat().middleRows(at, r);
      at += r;
    }
  });
}

Var flip_channels(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "flip_channels");
  Tensor out(xv.shape());
  out.mat() = xv.mat().colwise().reverse();
  return g.make("flip_channels", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).mat() += gy.mat().colwise().reverse();
  });
}

Var slice_time(Var x, Index begin, Index count) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "slice_time");
  RC_CHECK(begin >= 0 && count >= 1 && begin + count <= xv.dim(1),
           "slice_time: cols [" << begin << ", " << begin + count << ") out of " << xv.dim(1));
  Tensor out({xv.dim(0), count});
  out.mat() = xv.mat().middleCols(begin, count);
  return g.make("slice_time", std::move(out), {x},
                [x, begin, count](Graph& g, Var, const Tensor& gy) {
                  if (!g.requires_grad(x)) return;
                  g.grad_mut(x).mat().middleCols(begin, count) += gy.mat();
                });
}

Var concat_time(const std::vector<Var>& xs) {
  RC_CHECK(!xs.empty(), "concat_time: no inputs");
  Graph& g = graph_of(xs[0]);
  Index cols = 0;
  const Index rows = g.value(xs[0]).dim(0);
  for (Var v : xs) {
    same_graph(xs[0], v);
    check_rank2(g.value(v), "concat_time");
    RC_CHECK(g.value(v).dim(0) == rows, "concat_time: channel counts differ");
    cols += g.value(v).dim(1);
  }
  Tensor out({rows, cols});
  Index at = 0;
  for (Var v : xs) {
    const Index c = g.value(v).dim(1);
    out.mat().middleCols(at, c) = g.value(v).mat();
    at += c;
  }
  return g.make("concat_time", std::move(out), xs, [xs](Graph& g, Var, const Tensor& gy) {
    Index at = 0;
    for (Var v : xs) {
      const Index c = g.value(v).dim(1);
      if (g.requires_grad(v)) g.grad_mut(v).mat() += gy.mat().middleCols(at, c);
      at += c;
    }
  });
}

Var broadcast_time(Var v, Index frames) {
  Graph& g = graph_of(v);
  const Tensor& vv = g.value(v);
  RC_CHECK(vv.rank() == 1, "broadcast_time needs a rank-1 tensor");
  RC_CHECK(frames >= 1, "broadcast_time: frame count must be positive");
  Tensor out({vv.dim(0), frames});
  out.mat().noalias() = vv.vec() * Eigen::RowVectorXd::Ones(frames);
  return g.make("broadcast_time", std::move(out), {v}, [v](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(v)) return;
    g.grad_mut(v).vec() += gy.mat().rowwise().sum();
  });
}

Var stack_rows(const std::vector<Var>& vs) {
  RC_CHECK(!vs.empty(), "stack_rows: no inputs");
  Graph& g = graph_of(vs[0]);
  const Index dim = g.value(vs[0]).dim(0);
  for (Var v : vs) {
    same_graph(vs[0], v);
    RC_CHECK(g.value(v).rank() == 1 && g.value(v).dim(0) == dim,
             "stack_rows: all inputs must be rank-1 of equal length");
  }
  Tensor out({static_cast<Index>(vs.size()), dim});
  for (size_t b = 0; b < vs.size(); ++b) out.mat().row(static_cast<Index>(b)) = g.value(vs[b]).vec().transpose();
  return g.make("stack_rows", std::move(out), vs, [vs](Graph& g, Var, const Tensor& gy) {
    for (size_t b = 0; b < vs.size(); ++b) {
      if (!g.requires_grad(vs[b])) continue;
      g.grad_mut(vs[b]).vec() += gy.mat().row(static_cast<Index>(b)).transpose();
    }
  });
}

Var reshape(Var x, std::vector<Index> shape) {
  Graph& g = graph_of(x);
  Tensor out(shape);
  RC_CHECK(out.size() == g.value(x).size(), "reshape: size mismatch "
                                                << shape_str(g.value(x).shape()) << " -> "
                                                << shape_str(shape));
  out.flat() = g.value(x).flat();
  return g.make("reshape", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.flat();
  });
}

std::vector<Var> split_channels(Var x, Index n) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "split_channels");
  RC_CHECK(n >= 1 && xv.dim(0) % n == 0,
           "split_channels: " << n << " does not divide " << xv.dim(0) << " channels");
  const Index each = xv.dim(0) / n;
  std::vector<Var> subsets;
  subsets.reserve(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) subsets.push_back(slice_channels(x, i * each, each));
  return subsets;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Var sum_time(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "sum_time");
  Tensor out({xv.dim(0)});
  out.vec() = xv.mat().rowwise().sum();
  return g.make("sum_time", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    auto gx = g.grad_mut(x).mat();
    gx.colwise() += gy.vec();
  });
}

Var mean_time(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "mean_time");
  const double inv = 1.0 / static_cast<double>(xv.dim(1));
  Tensor out({xv.dim(0)});
  out.vec() = xv.mat().rowwise().sum() * inv;
  return g.make("mean_time", std::move(out), {x}, [x, inv](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    auto gx = g.grad_mut(x).mat();
    gx.colwise() += (gy.vec() * inv).eval();
  });
}

Var max_time(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "max_time");
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<size_t>(xv.dim(0)));
  Tensor out({xv.dim(0)});
  for (Index r = 0; r < xv.dim(0); ++r) {
    Index idx = 0;
    out.vec()(r) = xv.mat().row(r).maxCoeff(&idx);
    (*argmax)[static_cast<size_t>(r)] = idx;
  }
  return g.make("max_time", std::move(out), {x}, [x, argmax](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    auto gx = g.grad_mut(x).mat();
    for (Index r = 0; r < gx.rows(); ++r) gx(r, (*argmax)[static_cast<size_t>(r)]) += gy.vec()(r);
  });
}

Var sum_all(Var x) {
  Graph& g = graph_of(x);
  Tensor out = Tensor::scalar(g.value(x).flat().sum());
  return g.make("sum_all", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.at(0);
  });
}

Var mean_all(Var x) {
  Graph& g = graph_of(x);
  const double inv = 1.0 / static_cast<double>(g.value(x).size());
  Tensor out = Tensor::scalar(g.value(x).flat().sum() * inv);
  return g.make("mean_all", std::move(out), {x}, [x, inv](Graph& g, Var, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    g.grad_mut(x).flat() += gy.at(0) * inv;
  });
}

Var std_time(Var x) {
  const Index frames = graph_of(x).value(x).dim(1);
  Var centered = sub(x, broadcast_time(mean_time(x), frames));
  Var variance = mean_time(square(centered));
  return sqrt(clamp_min(variance, kVarianceEps));
}

// ---------------------------------------------------------------------------
// Softmax / cross entropy
// ---------------------------------------------------------------------------

Var softmax_time(Var x) {
  Graph& g = graph_of(x);
  const Tensor& xv = g.value(x);
  check_rank2(xv, "softmax_time");
  Tensor out(xv.shape());
  for (Index r = 0; r < xv.dim(0); ++r) {
    const double m = xv.mat().row(r).maxCoeff();
    Eigen::ArrayXd e = (xv.mat().row(r).array() - m).exp();
    out.mat().row(r) = (e / e.sum()).matrix();
  }
  return g.make("softmax_time", std::move(out), {x}, [x](Graph& g, Var self, const Tensor& gy) {
    if (!g.requires_grad(x)) return;
    const auto y = g.value(self).mat();
    auto gx = g.grad_mut(x).mat();
    for (Index r = 0; r < y.rows(); ++r) {
      const double dot = (gy.mat().row(r).array() * y.row(r).array()).sum();
      gx.row(r) += (y.row(r).array() * (gy.mat().row(r).array() - dot)).matrix();
    }
  });
}

Var cross_entropy_logits(Var logits, const std::vector<int>& labels) {
  Graph& g = graph_of(logits);
  const Tensor& z = g.value(logits);
  check_rank2(z, "cross_entropy_logits");
  const Index batch = z.dim(0);
  const Index classes = z.dim(1);
  RC_CHECK(static_cast<Index>(labels.size()) == batch,
           "cross_entropy_logits: " << labels.size() << " labels for " << batch << " rows");
  double total = 0.0;
  for (Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<size_t>(b)];
    RC_CHECK(y >= 0 && y < classes, "label " << y << " out of range [0, " << classes << ")");
    const double m = z.mat().row(b).maxCoeff();
    const double lse = m + std::log((z.mat().row(b).array() - m).exp().sum());
    total += lse - z(b, y);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(batch));
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return g.make("cross_entropy_logits", std::move(out), {logits},
                [logits, labels_copy](Graph& g, Var, const Tensor& gy) {
                  if (!g.requires_grad(logits)) return;
                  const Tensor& z = g.value(logits);
                  const Index batch = z.dim(0);
                  const double w = gy.at(0) / static_cast<double>(batch);
                  auto gz = g.grad_mut(logits).mat();
                  for (Index b = 0; b < batch; ++b) {
                    const double m = z.mat().row(b).maxCoeff();
                    Eigen::ArrayXd p = (z.mat().row(b).array() - m).exp();
                    p /= p.sum();
                    gz.row(b) += (p * w).matrix();
                    gz(b, (*labels_copy)[static_cast<size_t>(b)]) -= w;
                  }
                });
}

}  // namespace res2ctx
