// tests/test_blocks.cpp

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

#include "res2ctx/blocks.hpp"
#include "res2ctx/gradcheck.hpp"
#include "test_util.hpp"

using namespace res2ctx;
using res2ctx::testing::approx_equal;

namespace {

// Test-side fixtures: N-1 bare conv units with centered identity taps and
// BN/ReLU disabled, so the multi-scale recurrences reduce to pure additions.
std::vector<ConvBnRelu> identity_units(ParamStore& store, const std::string& prefix, Index n,
                                       Index width, Rng& rng) {
  ConvOptions opts;
  opts.use_bn = false;
  opts.use_relu = false;
  std::vector<ConvBnRelu> units;
  for (Index i = 0; i < n - 1; ++i) {
    units.emplace_back(store, prefix + std::to_string(i), width, width, 3, 1, rng, opts);
    Parameter* w = units.back().weight();
    w->value.set_zero();
    for (Index c = 0; c < width; ++c) w->value(c, c, 1) = 1.0;
    units.back().bias()->value.set_zero();
  }
  return units;
}

std::vector<ConvBnRelu> zero_units(ParamStore& store, const std::string& prefix, Index n,
                                   Index width, Rng& rng) {
  std::vector<ConvBnRelu> units;
  for (Index i = 0; i < n - 1; ++i) {
    units.emplace_back(store, prefix + std::to_string(i), width, width, 3, 1, rng);
    units.back().weight()->value.set_zero();
    units.back().bias()->value.set_zero();
  }
  return units;
}

std::vector<Tensor> random_subsets(Index n, Index width, Index frames, Rng& rng) {
  std::vector<Tensor> out;
  for (Index i = 0; i < n; ++i) out.push_back(Tensor::randn({width, frames}, rng));
  return out;
}

// ----- Straight-line re-implementation of the baseline block (eval mode,
// fresh batch-norm statistics), written with plain loops only. -----

Tensor ref_conv(const Tensor& in, const Tensor& ker, const Tensor& bias, Index dil) {
  const Index c_in = in.dim(0), t_len = in.dim(1), c_out = ker.dim(0), k = ker.dim(2);
  Tensor out({c_out, t_len});
  for (Index o = 0; o < c_out; ++o)
    for (Index t = 0; t < t_len; ++t) {
      double acc = bias(o);
      for (Index c = 0; c < c_in; ++c)
        for (Index j = 0; j < k; ++j) {
          const Index src = t + dil * (j - (k - 1) / 2);
          if (src >= 0 && src < t_len) acc += ker(o, c, j) * in(c, src);
        }
      out(o, t) = acc;
    }
  return out;
}

Tensor ref_unit_eval(const Tensor& in, const ParamStore& store, const std::string& prefix,
                     Index dil) {
  // conv -> eval BN with init stats (0, 1), gamma 1, beta 0 -> relu
  Tensor h = ref_conv(in, store.find(prefix + ".conv.weight")->value,
                      store.find(prefix + ".conv.bias")->value, dil);
  const double inv = 1.0 / std::sqrt(1.0 + 1e-5);
  for (Index i = 0; i < h.size(); ++i) {
    const double v = h.at(i) * inv;
    h.at(i) = v > 0.0 ? v : 0.0;
  }
  return h;
}

Tensor ref_se(const Tensor& x, const ParamStore& store, const std::string& prefix) {
  const Index c_len = x.dim(0), t_len = x.dim(1);
  const Tensor& sw = store.find(prefix + ".squeeze.weight")->value;
  const Tensor& sb = store.find(prefix + ".squeeze.bias")->value;
  const Tensor& ew = store.find(prefix + ".excite.weight")->value;
  const Tensor& eb = store.find(prefix + ".excite.bias")->value;
  std::vector<double> pooled(static_cast<size_t>(c_len), 0.0);
  for (Index c = 0; c < c_len; ++c) {
    for (Index t = 0; t < t_len; ++t) pooled[static_cast<size_t>(c)] += x(c, t);
    pooled[static_cast<size_t>(c)] /= static_cast<double>(t_len);
  }
  const Index mid = sw.dim(0);
  std::vector<double> hidden(static_cast<size_t>(mid), 0.0);
  for (Index i = 0; i < mid; ++i) {
    double acc = sb(i);
    for (Index c = 0; c < c_len; ++c) acc += sw(i, c) * pooled[static_cast<size_t>(c)];
    hidden[static_cast<size_t>(i)] = acc > 0.0 ? acc : 0.0;
  }
  Tensor out(x.shape());
  for (Index c = 0; c < c_len; ++c) {
    double acc = eb(c);
    for (Index i = 0; i < mid; ++i) acc += ew(c, i) * hidden[static_cast<size_t>(i)];
    const double gate = 1.0 / (1.0 + std::exp(-acc));
    for (Index t = 0; t < t_len; ++t) out(c, t) = gate * x(c, t);
  }
  return out;
}

Tensor ref_se_res2block_eval(const Tensor& x, const ParamStore& store, const std::string& prefix,
                             const BlockConfig& cfg) {
  const Index n = cfg.scale, width = cfg.channels / n, t_len = x.dim(1);
  Tensor h = ref_unit_eval(x, store, prefix + ".f1", 1);
  // split rows
  std::vector<Tensor> subsets;
  for (Index i = 0; i < n; ++i) {
    Tensor s({width, t_len});
    for (Index c = 0; c < width; ++c)
      for (Index t = 0; t < t_len; ++t) s(c, t) = h(i * width + c, t);
    subsets.push_back(std::move(s));
  }
  // recurrence
  std::vector<Tensor> ys(static_cast<size_t>(n));
  ys[0] = subsets[0];
  for (Index i = 1; i < n; ++i) {
    Tensor pre = subsets[static_cast<size_t>(i)];
    if (i > 1)
      for (Index c = 0; c < pre.size(); ++c) pre.at(c) += ys[static_cast<size_t>(i - 1)].at(c);
    ys[static_cast<size_t>(i)] =
        ref_unit_eval(pre, store, prefix + ".res2.k" + std::to_string(i + 1), cfg.dilation);
  }
  Tensor merged(x.shape());
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < width; ++c)
      for (Index t = 0; t < t_len; ++t) merged(i * width + c, t) = ys[static_cast<size_t>(i)](c, t);
  Tensor out = ref_se(ref_unit_eval(merged, store, prefix + ".f2", 1), store, prefix + ".se");
  for (Index i = 0; i < out.size(); ++i) out.at(i) += x.at(i);
  return out;
}

void zero_f2(ParamStore& store, const std::string& prefix) {
  store.find(prefix + ".f2.conv.weight")->value.set_zero();
  store.find(prefix + ".f2.conv.bias")->value.set_zero();
}

BlockConfig toy_config(BlockVariant variant) {
  BlockConfig cfg;
  cfg.channels = 16;
  cfg.scale = 4;
  cfg.kernel = 3;
  cfg.dilation = 2;
  cfg.se_bottleneck = 8;
  cfg.variant = variant;
  return cfg;
}

const BlockVariant kAllVariants[] = {BlockVariant::kSeRes2, BlockVariant::kSeBiRes2,
                                     BlockVariant::kBiSeRes2, BlockVariant::kSeRes2BiLstm};

}  // namespace

TEST_CASE("res2_forward identity-tap hand recursion at N=4") {
  Rng rng(101);
  ParamStore store;
  auto units = identity_units(store, "u", 4, 3, rng);
  auto xs = random_subsets(4, 3, 6, rng);
  Graph g;
  Binder b(g);
  std::vector<Var> sub;
  for (const Tensor& t : xs) sub.push_back(g.constant(t));
  auto ys = res2_forward(b, sub, units, Mode::kEval);

  // Hand recursion: y = {x1, x2, x3 + y2, x4 + y3} = {x1, x2, x3 + x2, x4 + x3 + x2}
  CHECK(g.value(ys[0]) == xs[0]);
  CHECK(g.value(ys[1]) == xs[1]);
  Tensor y2(xs[2].shape());
  y2.flat() = xs[2].flat() + xs[1].flat();
  CHECK(g.value(ys[2]) == y2);
  Tensor y3(xs[3].shape());
  y3.flat() = xs[3].flat() + y2.flat();
  CHECK(g.value(ys[3]) == y3);
}

TEST_CASE("res2_rev_forward identity-tap hand recursion at N=4") {
  Rng rng(102);
  ParamStore store;
  auto units = identity_units(store, "u", 4, 3, rng);
  auto xs = random_subsets(4, 3, 6, rng);
  Graph g;
  Binder b(g);
  std::vector<Var> sub;
  for (const Tensor& t : xs) sub.push_back(g.constant(t));
  auto ys = res2_rev_forward(b, sub, units, Mode::kEval);

  // Hand recursion: y' = {x1 + y'2, x2 + y'3, x3, x4} = {x1 + x2 + x3, x2 + x3, x3, x4}
  Tensor y1(xs[1].shape());
  y1.flat() = xs[1].flat() + xs[2].flat();
  Tensor y0(xs[0].shape());
  y0.flat() = xs[0].flat() + y1.flat();
  CHECK(g.value(ys[0]) == y0);
  CHECK(g.value(ys[1]) == y1);
  CHECK(g.value(ys[2]) == xs[2]);
  CHECK(g.value(ys[3]) == xs[3]);
}

TEST_CASE("zero kernels: first/last subset passes, the rest vanish") {
  Rng rng(103);
  ParamStore store;
  auto units = zero_units(store, "u", 4, 2, rng);
  auto xs = random_subsets(4, 2, 5, rng);
  Graph g;
  Binder b(g);
  std::vector<Var> sub;
  for (const Tensor& t : xs) sub.push_back(g.constant(t));

  auto fwd = res2_forward(b, sub, units, Mode::kEval);
  CHECK(g.value(fwd[0]) == xs[0]);
  for (int i = 1; i < 4; ++i) CHECK(g.value(fwd[i]) == Tensor::zeros({2, 5}));

  auto rev = res2_rev_forward(b, sub, units, Mode::kEval);
  CHECK(g.value(rev[3]) == xs[3]);
  for (int i = 0; i < 3; ++i) CHECK(g.value(rev[i]) == Tensor::zeros({2, 5}));
}

TEST_CASE("output subset shapes equal input subset shapes") {
  Rng rng(104);
  ParamStore store;
  BlockConfig cfg = toy_config(BlockVariant::kSeRes2);
  auto units = make_block(store, "blk", cfg, rng);
  Graph g;
  Binder b(g);
  Var x = g.constant(Tensor::randn({16, 9}, rng));
  Var y = units->forward_one(b, x, Mode::kEval);
  CHECK(g.value(y).shape() == std::vector<Index>{16, 9});
}

TEST_CASE("mirror conjugation: reversed recurrence equals reversed forward") {
  Rng rng(105);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 3 + static_cast<Index>(rng.uniform_int(3));  // 3..5 subsets
    const Index width = 2 + static_cast<Index>(rng.uniform_int(3));
    const Index frames = 3 + static_cast<Index>(rng.uniform_int(4));
    ParamStore store;
    std::vector<ConvBnRelu> units;
    for (Index i = 0; i < n - 1; ++i)
      units.emplace_back(store, "u" + std::to_string(i), width, width, 3, 1, rng);
    auto xs = random_subsets(n, width, frames, rng);

    Graph g;
    Binder b(g);
    std::vector<Var> sub, sub_reversed;
    for (const Tensor& t : xs) sub.push_back(g.constant(t));
    for (auto it = xs.rbegin(); it != xs.rend(); ++it) sub_reversed.push_back(g.constant(*it));

    auto lhs = res2_rev_forward(b, sub, units, Mode::kEval);

    std::vector<ConvBnRelu> units_reversed;
    for (auto it = units.rbegin(); it != units.rend(); ++it) units_reversed.push_back(*it);
    auto mirrored = res2_forward(b, sub_reversed, units_reversed, Mode::kEval);

    for (Index i = 0; i < n; ++i) {
      CHECK(g.value(lhs[static_cast<size_t>(i)]) ==
            g.value(mirrored[static_cast<size_t>(n - 1 - i)]));
    }
  }
}

TEST_CASE("kernel-count mismatch is rejected") {
  Rng rng(106);
  ParamStore store;
  auto units = zero_units(store, "u", 4, 2, rng);  // 3 units
  auto xs = random_subsets(3, 2, 5, rng);          // needs 2
  Graph g;
  Binder b(g);
  std::vector<Var> sub;
  for (const Tensor& t : xs) sub.push_back(g.constant(t));
  CHECK_THROWS_AS(res2_forward(b, sub, units, Mode::kEval), ValidationError);
  CHECK_THROWS_AS(res2_rev_forward(b, sub, units, Mode::kEval), ValidationError);
}

TEST_CASE("every variant preserves channel and frame counts") {
  Rng rng(107);
  for (BlockVariant variant : kAllVariants) {
    ParamStore store;
    auto block = make_block(store, "blk", toy_config(variant), rng);
    Graph g;
    Binder b(g);
    Var x = g.constant(Tensor::randn({16, 7}, rng));
    Var y = block->forward_one(b, x, Mode::kTrain);
    CHECK(g.value(y).dim(0) == 16);
    CHECK(g.value(y).dim(1) == 7);
  }
}

TEST_CASE("residual identity: zero f2 makes every variant the identity map") {
  Rng rng(108);
  for (BlockVariant variant : kAllVariants) {
    ParamStore store;
    auto block = make_block(store, "blk", toy_config(variant), rng);
    if (variant == BlockVariant::kBiSeRes2) {
      zero_f2(store, "blk.stream1");
      zero_f2(store, "blk.stream2");
    } else {
      zero_f2(store, "blk");
    }
    Tensor x = Tensor::randn({16, 6}, rng);
    for (Mode mode : {Mode::kTrain, Mode::kEval}) {
      Graph g;
      Binder b(g);
      Var y = block->forward_one(b, g.constant(x), mode);
      if (variant == BlockVariant::kBiSeRes2) {
        // Two zeroed streams: x + flip(x) exactly.
        Graph g2;
        Tensor expect = g2.value(add(g2.constant(x), flip_channels(g2.constant(x))));
        CHECK(g.value(y) == expect);
      } else {
        CHECK(g.value(y) == x);
      }
    }
  }
}

TEST_CASE("bi_se_res2block on flip-symmetric input with tied parameters doubles one stream") {
  Rng rng(109);
  BlockConfig cfg = toy_config(BlockVariant::kBiSeRes2);
  ParamStore store;
  BiSeRes2Block block(store, "blk", cfg, rng);
  // Tie stream2 to stream1.
  for (const auto& p : store.params()) {
    const std::string& name = p->name;
    const std::string key = "blk.stream2";
    if (name.rfind(key, 0) == 0) {
      Parameter* src = store.find("blk.stream1" + name.substr(key.size()));
      REQUIRE(src != nullptr);
      p->value = src->value;
    }
  }
  // Flip-symmetric input: row c equals row (C-1-c).
  Tensor x({16, 5});
  Rng xr(110);
  for (Index c = 0; c < 8; ++c)
    for (Index t = 0; t < 5; ++t) {
      const double v = xr.gaussian();
      x(c, t) = v;
      x(15 - c, t) = v;
    }
  Graph g;
  Binder b(g);
  Var out = block.forward(b, {g.constant(x)}, Mode::kEval)[0];

  ParamStore solo_store;
  Rng rng2(109);
  BlockConfig scfg = cfg;
  scfg.variant = BlockVariant::kSeRes2;
  SeRes2Block solo(solo_store, "solo", scfg, rng2);
  for (const auto& p : solo_store.params()) {
    Parameter* src = store.find("blk.stream1" + p->name.substr(std::string("solo").size()));
    REQUIRE(src != nullptr);
    p->value = src->value;
  }
  Graph g2;
  Binder b2(g2);
  Var one = solo.forward(b2, {g2.constant(x)}, Mode::kEval)[0];
  const Tensor single = g2.value(one);
  Tensor doubled(single.shape());
  doubled.flat() = 2.0 * single.flat();
  CHECK(g.value(out) == doubled);
}

TEST_CASE("se_res2block matches the straight-line oracle") {
  Rng rng(111);
  BlockConfig cfg = toy_config(BlockVariant::kSeRes2);
  ParamStore store;
  SeRes2Block block(store, "blk", cfg, rng);
  Tensor x = Tensor::randn({16, 8}, rng);
  Graph g;
  Binder b(g);
  Var y = block.forward(b, {g.constant(x)}, Mode::kEval)[0];
  const Tensor expect = ref_se_res2block_eval(x, store, "blk", cfg);
  CHECK(approx_equal(g.value(y), expect, 1e-10));
}

TEST_CASE("bilstm recurrence with zero cells keeps only the first subset") {
  Rng rng(112);
  ParamStore store;
  std::vector<BiLstm> lstms;
  for (int i = 0; i < 3; ++i) lstms.emplace_back(store, "l" + std::to_string(i), 4, 2, rng);
  for (const auto& p : store.params()) p->value.set_zero();
  auto xs = random_subsets(4, 4, 5, rng);
  Graph g;
  Binder b(g);
  // y1 = x1; y_i = BiLSTM(x_i + y_{i-1}) = 0 for i >= 2 (zero fixed point).
  std::vector<Var> ys(4);
  ys[0] = g.constant(xs[0]);
  for (size_t i = 1; i < 4; ++i) {
    Var pre = i == 1 ? g.constant(xs[1]) : add(g.constant(xs[i]), ys[i - 1]);
    ys[i] = lstms[i - 1].forward(b, pre);
  }
  CHECK(g.value(ys[0]) == xs[0]);
  for (size_t i = 1; i < 4; ++i) CHECK(g.value(ys[i]) == Tensor::zeros({4, 5}));
}

TEST_CASE("se_res2_bilstm rejects widths with fractional hidden size") {
  Rng rng(113);
  BlockConfig cfg;
  cfg.channels = 12;  // 12 / (2*4) is not an integer
  cfg.scale = 4;
  cfg.se_bottleneck = 4;
  cfg.variant = BlockVariant::kSeRes2BiLstm;
  ParamStore store;
  CHECK_THROWS_AS(make_block(store, "blk", cfg, rng), ValidationError);
}

TEST_CASE("channel mismatch is rejected by every variant") {
  Rng rng(114);
  for (BlockVariant variant : kAllVariants) {
    ParamStore store;
    auto block = make_block(store, "blk", toy_config(variant), rng);
    Graph g;
    Binder b(g);
    Var bad = g.constant(Tensor::randn({8, 5}, rng));
    CHECK_THROWS_AS(block->forward(b, {bad}, Mode::kEval), ValidationError);
  }
}

TEST_CASE("closed-form parameter counts match brute-force enumeration") {
  auto cbr = [](int64_t in, int64_t out, int64_t k) { return in * out * k + 3 * out; };
  auto se = [](int64_t c, int64_t bn) { return 2 * bn * c + bn + c; };
  auto lstm_cell = [](int64_t d, int64_t h) { return 4 * h * d + 4 * h * h + 4 * h; };

  Rng rng(115);
  const int64_t c = 16, n = 4, k = 3, bottleneck = 8;
  const int64_t sub = c / n, hidden = c / (2 * n);

  const int64_t base = 2 * cbr(c, c, 1) + (n - 1) * cbr(sub, sub, k) + se(c, bottleneck);
  const int64_t expected[] = {
      base,                                          // se_res2
      base + (n - 1) * cbr(sub, sub, k),             // se_bi_res2: second kernel bank
      2 * base,                                      // bi_se_res2: two full streams
      2 * cbr(c, c, 1) + (n - 1) * 2 * lstm_cell(sub, hidden) + se(c, bottleneck),
  };
  int idx = 0;
  for (BlockVariant variant : kAllVariants) {
    ParamStore store;
    auto block = make_block(store, "blk", toy_config(variant), rng);
    (void)block;
    CHECK(store.count() == expected[idx]);
    ++idx;
  }
}

TEST_CASE("block gradients pass the finite-difference suite") {
  auto rows = run_gradcheck_suites(2026);
  int block_rows = 0;
  for (const auto& row : rows) {
    if (row.name.rfind("block/", 0) != 0) continue;
    ++block_rows;
    INFO(row.name, " max_rel_err=", row.max_rel_err);
    CHECK(row.pass);
  }
  CHECK(block_rows == 4);
}
