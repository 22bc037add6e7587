// tests/test_graph.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "res2ctx/gradcheck.hpp"
#include "res2ctx/graph.hpp"
#include "res2ctx/rng.hpp"
#include "test_util.hpp"

using namespace res2ctx;
using res2ctx::testing::approx_equal;

namespace {

// Independent direct-summation oracle for the convolution contract:
//   out[o,t] = bias[o] + sum_{c,j} ker[o,c,j] * in[c, t + d*(j-(k-1)/2)]
Tensor conv1d_oracle(const Tensor& in, const Tensor& ker, const Tensor& bias, Index dilation) {
  const Index c_in = in.dim(0), t_len = in.dim(1);
  const Index c_out = ker.dim(0), k = ker.dim(2);
  Tensor out({c_out, t_len});
  for (Index o = 0; o < c_out; ++o) {
    for (Index t = 0; t < t_len; ++t) {
      double acc = bias(o);
      for (Index c = 0; c < c_in; ++c) {
        for (Index j = 0; j < k; ++j) {
          const Index src = t + dilation * (j - (k - 1) / 2);
          if (src >= 0 && src < t_len) acc += ker(o, c, j) * in(c, src);
        }
      }
      out(o, t) = acc;
    }
  }
  return out;
}

// Naive double-loop oracle for affine.
Tensor affine_oracle(const Tensor& w, const Tensor& x, const Tensor& b) {
  Tensor out({w.dim(0)});
  for (Index i = 0; i < w.dim(0); ++i) {
    double acc = b(i);
    for (Index j = 0; j < w.dim(1); ++j) acc += w(i, j) * x(j);
    out(i) = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("conv1d matches frozen hand example") {
  // in=[1,2,3], kernel=[1,0,-1], dilation=1, bias=0 -> [-2,-2,2]
  Graph g;
  Var in = g.constant(Tensor::matrix(1, 3, {1, 2, 3}));
  Var ker = g.constant(Tensor::from({1, 1, 3}, {1, 0, -1}));
  Var b = g.constant(Tensor::vector({0}));
  Var out = conv1d(in, ker, b, 1);
  const Tensor expect = Tensor::matrix(1, 3, {-2, -2, 2});
  CHECK(g.value(out) == expect);
  CHECK(g.value(out) == conv1d_oracle(Tensor::matrix(1, 3, {1, 2, 3}),
                                      Tensor::from({1, 1, 3}, {1, 0, -1}), Tensor::vector({0}), 1));
}

TEST_CASE("conv1d centered identity tap is the identity map") {
  Rng rng(11);
  Tensor x = Tensor::randn({3, 7}, rng);
  Tensor ker = Tensor::zeros({3, 3, 3});
  for (Index c = 0; c < 3; ++c) ker(c, c, 1) = 1.0;  // middle tap
  Graph g;
  Var out = conv1d(g.constant(x), g.constant(ker), g.constant(Tensor::zeros({3})), 2);
  CHECK(g.value(out) == x);
}

TEST_CASE("conv1d all-zero kernels and bias give zero output") {
  Rng rng(12);
  Tensor x = Tensor::randn({2, 5}, rng);
  Graph g;
  Var out = conv1d(g.constant(x), g.constant(Tensor::zeros({4, 2, 3})),
                   g.constant(Tensor::zeros({4})), 1);
  CHECK(g.value(out) == Tensor::zeros({4, 5}));
}

TEST_CASE("conv1d agrees with the direct-summation oracle on random cases") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Index c_in = 1 + static_cast<Index>(rng.uniform_int(3));
    const Index c_out = 1 + static_cast<Index>(rng.uniform_int(3));
    const Index t_len = 2 + static_cast<Index>(rng.uniform_int(7));
    const Index k = rng.uniform_int(2) ? 3 : 5;
    const Index dil = 1 + static_cast<Index>(rng.uniform_int(3));
    Tensor in = Tensor::randn({c_in, t_len}, rng);
    Tensor ker = Tensor::randn({c_out, c_in, k}, rng);
    Tensor bias = Tensor::randn({c_out}, rng);
    Graph g;
    Var out = conv1d(g.constant(in), g.constant(ker), g.constant(bias), dil);
    CHECK(approx_equal(g.value(out), conv1d_oracle(in, ker, bias, dil), 1e-12));
  }
}

TEST_CASE("conv1d rejects bad arguments") {
  Graph g;
  Var in = g.constant(Tensor::zeros({2, 4}));
  Var bias2 = g.constant(Tensor::zeros({2}));
  CHECK_THROWS_AS(conv1d(in, g.constant(Tensor::zeros({2, 2, 2})), bias2, 1), ValidationError);
  CHECK_THROWS_AS(conv1d(in, g.constant(Tensor::zeros({2, 2, 3})), bias2, 0), ValidationError);
  CHECK_THROWS_AS(conv1d(in, g.constant(Tensor::zeros({2, 3, 3})), bias2, 1), ValidationError);
  CHECK_THROWS_AS(conv1d(in, g.constant(Tensor::zeros({2, 2, 3})),
                         g.constant(Tensor::zeros({3})), 1),
                  ValidationError);
}

TEST_CASE("affine frozen examples and oracle") {
  {
    // identity weight, zero bias -> unchanged
    Graph g;
    Tensor w = Tensor::zeros({3, 3});
    for (Index i = 0; i < 3; ++i) w(i, i) = 1.0;
    Var out = affine(g.constant(w), g.constant(Tensor::vector({4, -1, 2})),
                     g.constant(Tensor::zeros({3})));
    CHECK(g.value(out) == Tensor::vector({4, -1, 2}));
  }
  {
    // weight=[[1,1]], bias=[1], input=[2,3] -> [6]
    Graph g;
    Var out = affine(g.constant(Tensor::matrix(1, 2, {1, 1})), g.constant(Tensor::vector({2, 3})),
                     g.constant(Tensor::vector({1})));
    CHECK(g.value(out) == Tensor::vector({6}));
  }
  {
    Rng rng(21);
    Tensor w = Tensor::randn({4, 6}, rng);
    Tensor x = Tensor::randn({6}, rng);
    Tensor b = Tensor::randn({4}, rng);
    Graph g;
    Var out = affine(g.constant(w), g.constant(x), g.constant(b));
    CHECK(approx_equal(g.value(out), affine_oracle(w, x, b), 1e-12));
  }
  {
    Graph g;
    CHECK_THROWS_AS(affine(g.constant(Tensor::zeros({2, 3})), g.constant(Tensor::zeros({4})),
                           g.constant(Tensor::zeros({2}))),
                    ValidationError);
  }
}

TEST_CASE("elementwise frozen examples") {
  Graph g;
  Var s = sigmoid(g.constant(Tensor::scalar(0.0)));
  CHECK(g.value(s).at(0) == 0.5);

  Var r = relu(g.constant(Tensor::vector({-3, 3})));
  CHECK(g.value(r) == Tensor::vector({0, 3}));

  Rng rng(31);
  Tensor x = Tensor::randn({2, 3}, rng);
  Var xv = g.constant(x);
  Var zero = add(xv, neg(xv));
  CHECK(g.value(zero) == Tensor::zeros({2, 3}));

  CHECK_THROWS_AS(add(g.constant(Tensor::zeros({2, 2})), g.constant(Tensor::zeros({2, 3}))),
                  ValidationError);
}

TEST_CASE("reductions: frozen examples") {
  Graph g;
  Var row = g.constant(Tensor::matrix(1, 4, {2.5, 2.5, 2.5, 2.5}));
  CHECK(g.value(mean_time(row)) == Tensor::vector({2.5}));
  // std of a constant row is sqrt(eps) under the variance clamp
  CHECK(g.value(std_time(row)).at(0) == doctest::Approx(std::sqrt(1e-8)).epsilon(1e-12));

  Var v = g.constant(Tensor::matrix(1, 3, {1, 2, 3}));
  CHECK(g.value(mean_time(v)) == Tensor::vector({2}));
  CHECK(g.value(sum_time(v)) == Tensor::vector({6}));
  CHECK(g.value(max_time(v)) == Tensor::vector({3}));
  CHECK(g.value(mean_all(v)).at(0) == 2.0);
}

TEST_CASE("split/concat round-trip and flip involution") {
  Rng rng(41);
  Tensor x = Tensor::randn({4, 6}, rng);
  Graph g;
  Var xv = g.constant(x);

  auto subsets = split_channels(xv, 2);
  CHECK(g.value(concat_channels(subsets)) == x);

  // ordering contract: N=2 over 4 channels -> rows {0,1} and {2,3}
  CHECK(g.value(subsets[0]) == Tensor::from({2, 6}, std::vector<double>(x.data(), x.data() + 12)));
  CHECK(g.value(subsets[1]) ==
        Tensor::from({2, 6}, std::vector<double>(x.data() + 12, x.data() + 24)));

  CHECK(g.value(flip_channels(flip_channels(xv))) == x);

  CHECK_THROWS_AS(split_channels(xv, 3), ValidationError);
}

TEST_CASE("backward frozen examples") {
  {
    // f(x) = x^2 at x=3 -> df/dx = 6
    Graph g;
    Var x = g.input(Tensor::scalar(3.0), true);
    Var y = square(x);
    g.backward(y);
    CHECK(g.grad(x).at(0) == 6.0);
  }
  {
    // f(x) = sigmoid(x) at 0 -> 0.25
    Graph g;
    Var x = g.input(Tensor::scalar(0.0), true);
    Var y = sigmoid(x);
    g.backward(y);
    CHECK(g.grad(x).at(0) == 0.25);
  }
}

TEST_CASE("backward seeding and reset rules") {
  Graph g;
  Var x = g.input(Tensor::scalar(2.0), true);
  Var y = square(x);
  Var z = square(y);
  CHECK_THROWS_AS(g.backward(y), ValidationError);  // y is not the graph output
  g.backward(z);
  CHECK(g.grad(x).at(0) == 32.0);  // d(x^4)/dx = 4x^3
  CHECK_THROWS_AS(g.backward(z), ValidationError);  // repeated backward without reset
  g.reset_grads();
  g.backward(z);
  CHECK(g.grad(x).at(0) == 32.0);
}

TEST_CASE("backward seed shape must match the output") {
  Graph g;
  Var x = g.input(Tensor::vector({1, 2}), true);
  Var y = relu(x);
  CHECK_THROWS_AS(g.backward(y, Tensor::zeros({3})), ValidationError);
  Tensor seed = Tensor::vector({1, 1});
  g.backward(y, seed);
  CHECK(g.grad(x) == Tensor::vector({1, 1}));
}

TEST_CASE("gradient accumulates across shared subexpressions") {
  Graph g;
  Var x = g.input(Tensor::scalar(3.0), true);
  Var y = add(mul(x, x), x);  // x^2 + x -> 2x + 1 = 7
  g.backward(y);
  CHECK(g.grad(x).at(0) == 7.0);
}

TEST_CASE("non-finite op output is surfaced, not propagated") {
  Graph g;
  Var x = g.constant(Tensor::vector({-1.0}));
  CHECK_THROWS_AS(log(x), NumericError);
  Tensor inf = Tensor::vector({1.0});
  inf.at(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(g.constant(inf) + g.constant(Tensor::vector({1.0})), NumericError);
}

TEST_CASE("forward kernels are pure: bit-identical reruns") {
  Rng rng(51);
  Tensor in = Tensor::randn({3, 9}, rng);
  Tensor ker = Tensor::randn({4, 3, 3}, rng);
  Tensor bias = Tensor::randn({4}, rng);
  Tensor first, second;
  {
    Graph g;
    first = g.value(conv1d(g.constant(in), g.constant(ker), g.constant(bias), 2));
  }
  {
    Graph g;
    second = g.value(conv1d(g.constant(in), g.constant(ker), g.constant(bias), 2));
  }
  REQUIRE(first.size() == second.size());
  CHECK(std::memcmp(first.data(), second.data(), sizeof(double) * first.size()) == 0);
}

TEST_CASE("parameter leaves accumulate into Parameter::grad") {
  Parameter p;
  p.name = "w";
  p.value = Tensor::vector({2.0, -1.0});
  Graph g;
  Var w = g.param(p);
  Var loss = sum_all(square(w));
  g.backward(loss);
  CHECK(p.grad == Tensor::vector({4.0, -2.0}));
  // A second graph accumulates on top.
  Graph g2;
  Var w2 = g2.param(p);
  g2.backward(sum_all(w2));
  CHECK(p.grad == Tensor::vector({5.0, -1.0}));
}

TEST_CASE("finite differences validate every registered op backward") {
  // rel err <= 1e-6 at h=1e-5 on small N(0,1) tensors, per the contract.
  auto rows = run_gradcheck_suites(2026);
  int op_rows = 0;
  for (const auto& row : rows) {
    if (row.name.rfind("op/", 0) != 0) continue;
    ++op_rows;
    INFO(row.name, " max_rel_err=", row.max_rel_err);
    CHECK(row.pass);
  }
  CHECK(op_rows >= 30);
}

TEST_CASE("a corrupted backward rule is caught by the checker") {
  // Negative control: an op whose backward is off by 10% must fail the
  // finite-difference suite.
  ScalarBuildFn build = [](Graph& g, const std::vector<Var>& leaves) {
    Var x = leaves[0];
    Tensor out = Tensor::zeros(g.value(x).shape());
    out.flat() = g.value(x).flat().square();
    Var bad = g.make("bad_square", std::move(out), {x}, [x](Graph& g, Var, const Tensor& gy) {
      g.grad_mut(x).flat() += gy.flat() * 2.2 * g.value(x).flat();  // should be 2.0
    });
    return sum_all(bad);
  };
  Rng rng(61);
  const double err = fd_max_rel_err(build, {Tensor::randn({3}, rng)});
  CHECK(err > 1e-3);
}
