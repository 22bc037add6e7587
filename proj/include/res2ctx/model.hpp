// res2ctx/model.hpp

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

#include "res2ctx/blocks.hpp"

namespace res2ctx {

// Backbone configuration.  Defaults follow the usual TDNN embedding recipe
// (stem k=5, three blocks at dilations 2/3/4, 1536-wide aggregation, 192-dim
// embedding); toy runs shrink width and the aggregation dims.
struct ModelConfig {
  BlockVariant variant = BlockVariant::kSeRes2;
  Index width = 512;  // C: block channel count
  Index scale = 8;    // N: subsets per block
  Index embed_dim = 192;
  Index mfa_dim = 1536;
  Index se_bottleneck = 128;
  Index attn_dim = 128;
  std::vector<Index> dilations = {2, 3, 4};
  Index mel_bins = 80;
  Index num_classes = 0;  // speaker classifier head; 0 builds none

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Embedding extractor: stem -> three context blocks (chained) -> concat of
// the block outputs -> pointwise aggregation conv -> attentive statistics
// pooling -> batch norm -> affine to the embedding.
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  std::vector<Var> embed_batch(Binder& b, const std::vector<Var>& feats, Mode mode);
  Var embed(Binder& b, Var feats, Mode mode);
  // Convenience single-utterance eval-mode extraction with its own graph.
  Tensor embed_eval(const Tensor& feats);

  // Exact count of scalar learnables; the classifier head is excluded unless
  // requested.  Buffers (batch-norm running stats) never count.
  int64_t param_count(bool include_classifier = false) const;

  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  Parameter* classifier() const { return classifier_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<ConvBnRelu> stem_;
  std::vector<std::unique_ptr<ContextBlock>> blocks_;
  std::unique_ptr<ConvBnRelu> mfa_;
  std::unique_ptr<AttentiveStatPool> pool_;
  std::unique_ptr<BatchNorm1d> pool_bn_;
  Parameter* embed_w_ = nullptr;
  Parameter* embed_b_ = nullptr;
  Parameter* classifier_ = nullptr;
};

// Checkpoint container: text header (format line, config as JSON, named
// tensor directory with shapes and byte offsets) followed by little-endian
// IEEE-754 32-bit payloads in directory order.  save(load(f)) is
// byte-identical to f.
void save_checkpoint(const Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

}  // namespace res2ctx
