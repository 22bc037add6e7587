// res2ctx/gradcheck.cpp

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

#include "res2ctx/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "res2ctx/blocks.hpp"
#include "res2ctx/model.hpp"
#include "res2ctx/nn.hpp"
#include "res2ctx/rng.hpp"
#include "res2ctx/training.hpp"

namespace res2ctx {

double fd_max_rel_err(const ScalarBuildFn& build, std::vector<Tensor> leaves, double h) {
  // Analytic pass.
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const Tensor& t : leaves) vars.push_back(g.input(t, true));
    Var out = build(g, vars);
    RC_CHECK(g.value(out).size() == 1, "gradcheck builder must return a scalar");
    g.backward(out);
    for (Var v : vars) {
      const Tensor& gr = g.grad(v);
      analytic.push_back(gr.empty() ? Tensor::zeros(g.value(v).shape()) : gr);
    }
  }

  auto eval = [&]() {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const Tensor& t : leaves) vars.push_back(g.input(t, false));
    Var out = build(g, vars);
    return g.value(out).at(0);
  };

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    for (Index c = 0; c < leaf.size(); ++c) {
      const double keep = leaf.at(c);
      leaf.at(c) = keep + h;
      const double up = eval();
      leaf.at(c) = keep - h;
      const double down = eval();
      leaf.at(c) = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[li].at(c);
      const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

double fd_max_rel_err_params(const std::function<Var(Graph&)>& build,
                             const std::vector<Parameter*>& params, double h, Index sample_limit,
                             uint64_t sample_seed) {
  for (Parameter* p : params) p->zero_grad();
  std::vector<Tensor> analytic;
  {
    Graph g;
    Var out = build(g);
    RC_CHECK(g.value(out).size() == 1, "gradcheck builder must return a scalar");
    g.backward(out);
    for (Parameter* p : params) {
      analytic.push_back(p->grad.empty() ? Tensor::zeros(p->value.shape()) : p->grad);
      p->zero_grad();
    }
  }

  auto eval = [&]() {
    Graph g;
    return g.value(build(g)).at(0);
  };

  Rng pick(sample_seed);
  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = params[pi]->value;
    std::vector<Index> coords;
    if (sample_limit > 0 && value.size() > sample_limit) {
      for (Index i = 0; i < sample_limit; ++i)
        coords.push_back(static_cast<Index>(pick.uniform_int(static_cast<uint64_t>(value.size()))));
    } else {
      for (Index i = 0; i < value.size(); ++i) coords.push_back(i);
    }
    for (Index c : coords) {
      const double keep = value.at(c);
      value.at(c) = keep + h;
      const double up = eval();
      value.at(c) = keep - h;
      const double down = eval();
      value.at(c) = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[pi].at(c);
      const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  return worst;
}

namespace {

// Scalarizes a tensor output with a fixed random projection so that a wrong
// gradient in any coordinate shows up instead of averaging out.
Var project(Graph& g, Var y, Rng& rng) {
  Tensor w = Tensor::randn(g.value(y).shape(), rng);
  return sum_all(mul(y, g.constant(std::move(w))));
}

struct SuiteBuilder {
  std::vector<CheckRow> rows;
  uint64_t seed;

  void run(const std::string& name, double tol, const ScalarBuildFn& build,
           std::vector<Tensor> leaves, double h = 1e-5) {
    CheckRow row;
    row.name = name;
    row.tolerance = tol;
    row.max_rel_err = fd_max_rel_err(build, std::move(leaves), h);
    row.pass = row.max_rel_err <= tol;
    rows.push_back(std::move(row));
  }

  void run_params(const std::string& name, double tol, const std::function<Var(Graph&)>& build,
                  const std::vector<Parameter*>& params, Index sample_limit = 0) {
    CheckRow row;
    row.name = name;
    row.tolerance = tol;
    row.max_rel_err = fd_max_rel_err_params(build, params, 1e-5, sample_limit, seed);
    row.pass = row.max_rel_err <= tol;
    rows.push_back(std::move(row));
  }

  Rng rng_for(const std::string& name) {
    uint64_t x = seed;
    for (char ch : name) x = Rng::mix(x, static_cast<uint64_t>(static_cast<unsigned char>(ch)));
    return Rng(x);
  }
};

void register_op_checks(SuiteBuilder& sb) {
  using BF = ScalarBuildFn;

  auto unary_case = [&](const std::string& name, auto op, double lo_shift) {
    Rng rng = sb.rng_for(name);
    Tensor x = Tensor::randn({3, 4}, rng);
    if (lo_shift != 0.0) x.flat() = x.flat().abs() + lo_shift;  // positive-domain ops
    Rng prng = sb.rng_for(name + "/proj");
    BF build = [op, prng](Graph& g, const std::vector<Var>& leaves) mutable {
      Rng r = prng;
      return project(g, op(leaves[0]), r);
    };
    sb.run("op/" + name, kOpGradTol, build, {x});
  };

  unary_case("relu", [](Var v) { return relu(v); }, 0.0);
  unary_case("sigmoid", [](Var v) { return sigmoid(v); }, 0.0);
  unary_case("tanh", [](Var v) { return tanh(v); }, 0.0);
  unary_case("exp", [](Var v) { return exp(v); }, 0.0);
  unary_case("log", [](Var v) { return log(v); }, 0.5);
  unary_case("sqrt", [](Var v) { return sqrt(v); }, 0.5);
  unary_case("rsqrt", [](Var v) { return rsqrt(v); }, 0.5);
  unary_case("square", [](Var v) { return square(v); }, 0.0);
  unary_case("neg", [](Var v) { return neg(v); }, 0.0);
  unary_case("scale", [](Var v) { return scale(v, -1.7); }, 0.0);
  unary_case("add_scalar", [](Var v) { return add_scalar(v, 0.3); }, 0.0);
  unary_case("clamp_min", [](Var v) { return clamp_min(v, 0.25); }, 0.5);

  auto binary_case = [&](const std::string& name, auto op) {
    Rng rng = sb.rng_for(name);
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({3, 4}, rng);
    Rng prng = sb.rng_for(name + "/proj");
    BF build = [op, prng](Graph& g, const std::vector<Var>& leaves) mutable {
      Rng r = prng;
      return project(g, op(leaves[0], leaves[1]), r);
    };
    sb.run("op/" + name, kOpGradTol, build, {a, b});
  };
  binary_case("add", [](Var a, Var b) { return add(a, b); });
  binary_case("sub", [](Var a, Var b) { return sub(a, b); });
  binary_case("mul", [](Var a, Var b) { return mul(a, b); });

  {
    Rng rng = sb.rng_for("matmul");
    Tensor a = Tensor::randn({3, 4}, rng);
    Tensor b = Tensor::randn({4, 2}, rng);
    Rng prng = sb.rng_for("matmul/proj");
    BF build = [prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, matmul(l[0], l[1]), r);
    };
    sb.run("op/matmul", kOpGradTol, build, {a, b});
  }
  {
    Rng rng = sb.rng_for("transpose");
    Tensor a = Tensor::randn({3, 5}, rng);
    Rng prng = sb.rng_for("transpose/proj");
    BF build = [prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, transpose(l[0]), r);
    };
    sb.run("op/transpose", kOpGradTol, build, {a});
  }
  {
    Rng rng = sb.rng_for("affine");
    Tensor w = Tensor::randn({4, 3}, rng);
    Tensor x = Tensor::randn({3}, rng);
    Tensor b = Tensor::randn({4}, rng);
    Rng prng = sb.rng_for("affine/proj");
    BF build = [prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, affine(l[0], l[1], l[2]), r);
    };
    sb.run("op/affine", kOpGradTol, build, {w, x, b});
  }
  for (Index dilation : {Index(1), Index(2)}) {
    Rng rng = sb.rng_for("conv1d" + std::to_string(dilation));
    Tensor in = Tensor::randn({3, 8}, rng);
    Tensor ker = Tensor::randn({2, 3, 3}, rng);
    Tensor b = Tensor::randn({2}, rng);
    Rng prng = sb.rng_for("conv1d/proj" + std::to_string(dilation));
    BF build = [prng, dilation](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, conv1d(l[0], l[1], l[2], dilation), r);
    };
    sb.run("op/conv1d_d" + std::to_string(dilation), kOpGradTol, build, {in, ker, b});
  }
  for (bool reverse : {false, true}) {
    const std::string name = reverse ? "lstm_rev" : "lstm_fwd";
    Rng rng = sb.rng_for(name);
    const Index h = 3, d = 2, t_len = 5;
    Tensor x = Tensor::randn({d, t_len}, rng);
    Tensor wx = Tensor::randn({4 * h, d}, rng);
    Tensor wh = Tensor::randn({4 * h, h}, rng);
    Tensor b = Tensor::randn({4 * h}, rng);
    Rng prng = sb.rng_for(name + "/proj");
    BF build = [prng, reverse](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, lstm_seq(l[0], l[1], l[2], l[3], reverse), r);
    };
    sb.run("op/" + name, kOpGradTol, build, {x, wx, wh, b});
  }
  {
    Rng rng = sb.rng_for("shape_ops");
    Tensor a = Tensor::randn({4, 5}, rng);
    Tensor b = Tensor::randn({2, 5}, rng);
    Rng prng = sb.rng_for("shape_ops/proj");
    BF build = [prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      auto subsets = split_channels(l[0], 2);
      Var y = concat_channels({subsets[1], flip_channels(subsets[0]), l[1]});
      Var z = concat_time({slice_time(y, 0, 2), slice_time(y, 2, 3)});
      return project(g, reshape(z, {5, 6}), r);
    };
    sb.run("op/shape_ops", kOpGradTol, build, {a, b});
  }
  {
    Rng rng = sb.rng_for("broadcast_time");
    Tensor v = Tensor::randn({4}, rng);
    Rng prng = sb.rng_for("broadcast_time/proj");
    BF build = [prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, broadcast_time(l[0], 6), r);
    };
    sb.run("op/broadcast_time", kOpGradTol, build, {v});
  }
  {
    Rng rng = sb.rng_for("stack_rows");
    Tensor a = Tensor::randn({4}, rng);
    Tensor b = Tensor::randn({4}, rng);
    Rng prng = sb.rng_for("stack_rows/proj");
    BF build = [prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, stack_rows({l[0], l[1]}), r);
    };
    sb.run("op/stack_rows", kOpGradTol, build, {a, b});
  }
  auto reduce_case = [&](const std::string& name, auto op) {
    Rng rng = sb.rng_for(name);
    Tensor x = Tensor::randn({3, 6}, rng);
    Rng prng = sb.rng_for(name + "/proj");
    BF build = [op, prng](Graph& g, const std::vector<Var>& l) mutable {
      Rng r = prng;
      return project(g, op(l[0]), r);
    };
    sb.run("op/" + name, kOpGradTol, build, {x});
  };
  reduce_case("sum_time", [](Var v) { return sum_time(v); });
  reduce_case("mean_time", [](Var v) { return mean_time(v); });
  reduce_case("max_time", [](Var v) { return max_time(v); });
  reduce_case("std_time", [](Var v) { return std_time(v); });
  reduce_case("softmax_time", [](Var v) { return softmax_time(v); });
  reduce_case("sum_all", [](Var v) { return sum_all(v); });
  reduce_case("mean_all", [](Var v) { return mean_all(v); });
  {
    Rng rng = sb.rng_for("cross_entropy");
    Tensor logits = Tensor::randn({4, 3}, rng);
    const std::vector<int> labels = {0, 2, 1, 2};
    BF build = [labels](Graph&, const std::vector<Var>& l) {
      return cross_entropy_logits(l[0], labels);
    };
    sb.run("op/cross_entropy_logits", kOpGradTol, build, {logits});
  }
}

std::vector<Parameter*> all_params(const ParamStore& store) {
  std::vector<Parameter*> out;
  for (const auto& p : store.params()) out.push_back(p.get());
  return out;
}

void register_layer_checks(SuiteBuilder& sb) {
  {
    Rng rng = sb.rng_for("layer/se");
    ParamStore store;
    SeBlock se(store, "se", 5, 2, rng);
    Parameter* input = store.create("input", {5, 4}, rng, 1.0);
    Rng prng = sb.rng_for("layer/se/proj");
    auto build = [&](Graph& g) {
      Binder b(g);
      Rng r = prng;
      return project(g, se.forward(b, b(input)), r);
    };
    sb.run_params("layer/se_block", kLayerGradTol, build, all_params(store));
  }
  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    const std::string name =
        mode == Mode::kTrain ? "layer/conv_bn_relu_train" : "layer/conv_bn_relu_eval";
    Rng rng = sb.rng_for(name);
    ParamStore store;
    ConvBnRelu unit(store, "unit", 3, 4, 3, 2, rng);
    Parameter* in0 = store.create("input0", {3, 5}, rng, 1.0);
    Parameter* in1 = store.create("input1", {3, 5}, rng, 1.0);
    if (mode == Mode::kEval) {
      // Non-trivial stored statistics so the eval path is exercised.
      Rng srng = sb.rng_for(name + "/stats");
      Graph g;
      Binder b(g);
      (void)unit.forward(b, {b(in0), b(in1)}, Mode::kTrain);
      (void)srng;
    }
    Rng prng = sb.rng_for(name + "/proj");
    auto build = [&, mode](Graph& g) {
      Binder b(g);
      Rng r = prng;
      auto ys = unit.forward(b, {b(in0), b(in1)}, mode);
      return project(g, concat_time(ys), r);
    };
    sb.run_params(name, kLayerGradTol, build, all_params(store));
  }
  for (bool reverse : {false, true}) {
    const std::string name = reverse ? "layer/lstm_rev" : "layer/lstm_fwd";
    Rng rng = sb.rng_for(name);
    ParamStore store;
    LstmCell cell(store, "cell", 2, 3, rng);
    Parameter* input = store.create("input", {2, 5}, rng, 1.0);
    Rng prng = sb.rng_for(name + "/proj");
    auto build = [&, reverse](Graph& g) {
      Binder b(g);
      Rng r = prng;
      return project(g, cell.forward(b, b(input), reverse), r);
    };
    sb.run_params(name, kLayerGradTol, build, all_params(store));
  }
  {
    Rng rng = sb.rng_for("layer/bilstm");
    ParamStore store;
    BiLstm bl(store, "bl", 2, 2, rng);
    Parameter* input = store.create("input", {2, 4}, rng, 1.0);
    Rng prng = sb.rng_for("layer/bilstm/proj");
    auto build = [&](Graph& g) {
      Binder b(g);
      Rng r = prng;
      return project(g, bl.forward(b, b(input)), r);
    };
    sb.run_params("layer/bilstm", kLayerGradTol, build, all_params(store));
  }
  {
    Rng rng = sb.rng_for("layer/pool");
    ParamStore store;
    AttentiveStatPool pool(store, "pool", 4, 3, rng);
    Parameter* input = store.create("input", {4, 5}, rng, 1.0);
    Rng prng = sb.rng_for("layer/pool/proj");
    auto build = [&](Graph& g) {
      Binder b(g);
      Rng r = prng;
      return project(g, pool.forward(b, b(input)), r);
    };
    sb.run_params("layer/attentive_stat_pool", kLayerGradTol, build, all_params(store));
  }
}

void register_block_checks(SuiteBuilder& sb) {
  for (BlockVariant variant :
       {BlockVariant::kSeRes2, BlockVariant::kSeBiRes2, BlockVariant::kBiSeRes2,
        BlockVariant::kSeRes2BiLstm}) {
    const std::string name = "block/" + variant_name(variant);
    Rng rng = sb.rng_for(name);
    ParamStore store;
    BlockConfig cfg;
    cfg.channels = 16;
    cfg.scale = 4;
    cfg.kernel = 3;
    cfg.dilation = 2;
    cfg.se_bottleneck = 8;
    cfg.variant = variant;
    auto block = make_block(store, "blk", cfg, rng);
    Parameter* in0 = store.create("input0", {16, 5}, rng, 1.0);
    Parameter* in1 = store.create("input1", {16, 5}, rng, 1.0);
    Rng prng = sb.rng_for(name + "/proj");
    auto build = [&](Graph& g) {
      Binder b(g);
      Rng r = prng;
      auto ys = block->forward(b, {b(in0), b(in1)}, Mode::kTrain);
      return project(g, concat_time(ys), r);
    };
    sb.run_params(name, kBlockGradTol, build, all_params(store));
  }
}

void register_model_checks(SuiteBuilder& sb) {
  // End-to-end: toy backbone, batch of 2 crops, AAM loss over 3 speakers.
  // 20 randomly sampled parameter tensors, a few coordinates each.
  const std::string name = "model/end_to_end";
  Rng rng = sb.rng_for(name);
  ModelConfig cfg;
  cfg.variant = BlockVariant::kSeRes2;
  cfg.width = 16;
  cfg.scale = 4;
  cfg.embed_dim = 16;
  cfg.mfa_dim = 24;
  cfg.se_bottleneck = 8;
  cfg.attn_dim = 8;
  cfg.num_classes = 3;
  Model model(cfg, rng.next_u64());

  ParamStore inputs;
  Parameter* in0 = inputs.create("input0", {80, 10}, rng, 1.0);
  Parameter* in1 = inputs.create("input1", {80, 10}, rng, 1.0);
  const std::vector<int> labels = {0, 2};

  auto build = [&](Graph& g) {
    Binder b(g);
    auto embs = model.embed_batch(b, {b(in0), b(in1)}, Mode::kTrain);
    return aam_softmax_loss(stack_rows(embs), labels, b(model.classifier()), AamConfig());
  };

  std::vector<Parameter*> all;
  for (const auto& p : model.store().params()) all.push_back(p.get());
  std::vector<Parameter*> sampled;
  while (sampled.size() < 20 && sampled.size() < all.size()) {
    Parameter* pick = all[rng.uniform_int(all.size())];
    if (std::find(sampled.begin(), sampled.end(), pick) == sampled.end())
      sampled.push_back(pick);
  }
  sampled.push_back(in0);  // input gradients ride along

  CheckRow row;
  row.name = name;
  row.tolerance = kModelGradTol;
  row.max_rel_err = fd_max_rel_err_params(build, sampled, 1e-5, 3, sb.seed);
  row.pass = row.max_rel_err <= row.tolerance;
  sb.rows.push_back(std::move(row));
}

}  // namespace

std::vector<CheckRow> run_gradcheck_suites(uint64_t seed) {
  SuiteBuilder sb;
  sb.seed = seed;
  register_op_checks(sb);
  register_layer_checks(sb);
  register_block_checks(sb);
  register_model_checks(sb);
  return sb.rows;
}

}  // namespace res2ctx
