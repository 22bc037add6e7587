// res2ctx/blocks.hpp

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
#include <string>
#include <vector>

#include "res2ctx/nn.hpp"

namespace res2ctx {

enum class BlockVariant { kSeRes2, kSeBiRes2, kBiSeRes2, kSeRes2BiLstm };

BlockVariant parse_variant(const std::string& name);
std::string variant_name(BlockVariant v);

struct BlockConfig {
  Index channels = 0;
  Index scale = 8;          // number of channel subsets
  Index kernel = 3;
  Index dilation = 1;
  Index se_bottleneck = 128;
  BlockVariant variant = BlockVariant::kSeRes2;

  void validate() const;
};

// Hierarchical multi-scale recurrence over ordered channel subsets.  The
// first subset passes through untouched; every later one is convolved after
// adding the previous output:
//   y[0] = x[0];  y[1] = K[0](x[1]);  y[i] = K[i-1](x[i] + y[i-1])
// Batch items share the units, so their batch-norm statistics pool jointly.
std::vector<std::vector<Var>> res2_forward_batch(Binder& b,
                                                 const std::vector<std::vector<Var>>& subsets,
                                                 std::vector<ConvBnRelu>& units, Mode mode);
std::vector<Var> res2_forward(Binder& b, const std::vector<Var>& subsets,
                              std::vector<ConvBnRelu>& units, Mode mode);

// The same recurrence run from the last subset toward the first:
//   y[N-1] = x[N-1];  y[N-2] = K[N-2](x[N-2]);  y[i] = K[i](x[i] + y[i+1])
std::vector<std::vector<Var>> res2_rev_forward_batch(Binder& b,
                                                     const std::vector<std::vector<Var>>& subsets,
                                                     std::vector<ConvBnRelu>& units, Mode mode);
std::vector<Var> res2_rev_forward(Binder& b, const std::vector<Var>& subsets,
                                  std::vector<ConvBnRelu>& units, Mode mode);

// Common interface: a block maps a batch of C x T maps to same-shaped maps.
class ContextBlock {
 public:
  virtual ~ContextBlock() = default;
  virtual std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode) = 0;
  Var forward_one(Binder& b, Var x, Mode mode) { return forward(b, {x}, mode)[0]; }
};

// Baseline unit: SE(f2(concat(res2(split(f1(x)))))) + x.
class SeRes2Block : public ContextBlock {
 public:
  SeRes2Block(ParamStore& store, const std::string& prefix, const BlockConfig& cfg, Rng& rng);
  std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode) override;

 private:
  BlockConfig cfg_;
  ConvBnRelu f1_, f2_;
  std::vector<ConvBnRelu> units_;
  SeBlock se_;
};

// Two multi-scale passes over the same split, one per direction, added
// subset-wise before the channel merge; separate kernel banks per direction.
class SeBiRes2Block : public ContextBlock {
 public:
  SeBiRes2Block(ParamStore& store, const std::string& prefix, const BlockConfig& cfg, Rng& rng);
  std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode) override;

 private:
  BlockConfig cfg_;
  ConvBnRelu f1_, f2_;
  std::vector<ConvBnRelu> fwd_units_, rev_units_;
  SeBlock se_;
};

// Dual stream: one full baseline block on x, a second on the channel-flipped
// map; each keeps its internal residual and the streams are summed.
class BiSeRes2Block : public ContextBlock {
 public:
  BiSeRes2Block(ParamStore& store, const std::string& prefix, const BlockConfig& cfg, Rng& rng);
  std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode) override;

 private:
  SeRes2Block stream1_, stream2_;
};

// Baseline block with the central convolutions replaced by Bi-LSTMs: each
// subset is a T-step sequence of (C/N)-dim vectors, hidden size C/(2N) per
// direction so the concatenated output restores C/N channels.
class SeRes2BiLstmBlock : public ContextBlock {
 public:
  SeRes2BiLstmBlock(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                    Rng& rng);
  std::vector<Var> forward(Binder& b, const std::vector<Var>& xs, Mode mode) override;

 private:
  BlockConfig cfg_;
  ConvBnRelu f1_, f2_;
  std::vector<BiLstm> lstms_;
  SeBlock se_;
};

std::unique_ptr<ContextBlock> make_block(ParamStore& store, const std::string& prefix,
                                         const BlockConfig& cfg, Rng& rng);

}  // namespace res2ctx
