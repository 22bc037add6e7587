// res2ctx/model.cpp

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

#include "res2ctx/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace res2ctx {

void ModelConfig::validate() const {
  RC_CHECK(width >= 1 && scale >= 2, "invalid width/scale");
  RC_CHECK(width % (2 * scale) == 0,
           "width " << width << " must be divisible by 2*scale = " << 2 * scale);
  RC_CHECK(dilations.size() == 3, "the backbone uses exactly three blocks");
  for (Index d : dilations) RC_CHECK(d >= 1, "dilations must be positive");
  RC_CHECK(embed_dim >= 1 && mfa_dim >= 1 && attn_dim >= 1, "invalid head dimensions");
  RC_CHECK(se_bottleneck >= 1 && se_bottleneck < width, "SE bottleneck must compress the width");
  RC_CHECK(mel_bins >= 1, "mel_bins must be positive");
  RC_CHECK(num_classes >= 0, "num_classes must be non-negative");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["width"] = width;
  j["scale"] = scale;
  j["embed_dim"] = embed_dim;
  j["mfa_dim"] = mfa_dim;
  j["se_bottleneck"] = se_bottleneck;
  j["attn_dim"] = attn_dim;
  j["dilations"] = dilations;
  j["mel_bins"] = mel_bins;
  j["num_classes"] = num_classes;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model config JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    cfg.width = j.at("width").get<Index>();
    cfg.scale = j.at("scale").get<Index>();
    cfg.embed_dim = j.at("embed_dim").get<Index>();
    cfg.mfa_dim = j.at("mfa_dim").get<Index>();
    cfg.se_bottleneck = j.at("se_bottleneck").get<Index>();
    cfg.attn_dim = j.at("attn_dim").get<Index>();
    cfg.dilations = j.at("dilations").get<std::vector<Index>>();
    cfg.mel_bins = j.at("mel_bins").get<Index>();
    cfg.num_classes = j.at("num_classes").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  stem_ = std::make_unique<ConvBnRelu>(store_, "stem", cfg_.mel_bins, cfg_.width, 5, 1, rng);
  for (size_t i = 0; i < 3; ++i) {
    BlockConfig bc;
    bc.channels = cfg_.width;
    bc.scale = cfg_.scale;
    bc.kernel = 3;
    bc.dilation = cfg_.dilations[i];
    bc.se_bottleneck = cfg_.se_bottleneck;
    bc.variant = cfg_.variant;
    blocks_.push_back(make_block(store_, "block" + std::to_string(i + 1), bc, rng));
  }
  mfa_ = std::make_unique<ConvBnRelu>(store_, "mfa", 3 * cfg_.width, cfg_.mfa_dim, 1, 1, rng);
  pool_ = std::make_unique<AttentiveStatPool>(store_, "pool", cfg_.mfa_dim, cfg_.attn_dim, rng);
  pool_bn_ = std::make_unique<BatchNorm1d>(store_, "pool_bn", 2 * cfg_.mfa_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * cfg_.mfa_dim));
  embed_w_ = store_.create("embed.weight", {cfg_.embed_dim, 2 * cfg_.mfa_dim}, rng, bound);
  embed_b_ = store_.create("embed.bias", {cfg_.embed_dim}, rng, bound);
  if (cfg_.num_classes > 0) {
    const double cbound = 1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim));
    classifier_ = store_.create("classifier.weight", {cfg_.num_classes, cfg_.embed_dim}, rng,
                                cbound);
  }
}

std::vector<Var> Model::embed_batch(Binder& b, const std::vector<Var>& feats, Mode mode) {
  RC_CHECK(!feats.empty(), "embed on an empty batch");
  for (Var f : feats) {
    const Tensor& fv = b.g.value(f);
    RC_CHECK(fv.rank() == 2 && fv.dim(0) == cfg_.mel_bins,
             "features must have " << cfg_.mel_bins << " mel bins, got " << shape_str(fv.shape()));
  }
  auto xs = stem_->forward(b, feats, mode);
  auto b1 = blocks_[0]->forward(b, xs, mode);
  auto b2 = blocks_[1]->forward(b, b1, mode);
  auto b3 = blocks_[2]->forward(b, b2, mode);
  std::vector<Var> cat;
  cat.reserve(feats.size());
  for (size_t it = 0; it < feats.size(); ++it)
    cat.push_back(concat_channels({b1[it], b2[it], b3[it]}));
  auto agg = mfa_->forward(b, cat, mode);

  std::vector<Var> pooled;
  pooled.reserve(agg.size());
  for (Var m : agg) pooled.push_back(reshape(pool_->forward(b, m), {2 * cfg_.mfa_dim, 1}));
  auto normed = pool_bn_->forward(b, pooled, mode);

  std::vector<Var> out;
  out.reserve(normed.size());
  for (Var v : normed)
    out.push_back(affine(b(embed_w_), reshape(v, {2 * cfg_.mfa_dim}), b(embed_b_)));
  return out;
}

Var Model::embed(Binder& b, Var feats, Mode mode) { return embed_batch(b, {feats}, mode)[0]; }

Tensor Model::embed_eval(const Tensor& feats) {
  Graph g;
  Binder b(g);
  return g.value(embed(b, g.constant(feats), Mode::kEval));
}

int64_t Model::param_count(bool include_classifier) const {
  return include_classifier ? store_.count() : store_.count("classifier.");
}

// ---------------------------------------------------------------------------
// Checkpoint io
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kMagic = "RES2CTX-CKPT v1";
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  const auto& entries = model.store().entries();
  out << kMagic << "\n";
  out << "config: " << model.config().to_json() << "\n";
  out << "tensors: " << entries.size() << "\n";
  int64_t offset = 0;  // bytes into the float32 payload
  for (const auto& e : entries) {
    out << e.name << " " << e.tensor->rank();
    for (Index d : e.tensor->shape()) out << " " << d;
    out << " " << offset << " " << e.tensor->size() << "\n";
    offset += e.tensor->size() * static_cast<int64_t>(sizeof(float));
  }
  out << "payload: " << offset << "\n";
  out << "---\n";
  for (const auto& e : entries) {
    const Tensor& t = *e.tensor;
    std::vector<float> buf(static_cast<size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t.at(i));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  RC_CHECK(out.good(), "failed writing checkpoint '" << path << "'");
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  RC_CHECK(in.good(), "cannot open checkpoint '" << path << "'");
  std::string line;
  RC_CHECK(std::getline(in, line) && line == kMagic,
           "'" << path << "' is not a checkpoint (bad magic)");
  RC_CHECK(std::getline(in, line) && line.rfind("config: ", 0) == 0,
           "checkpoint missing config line");
  ModelConfig cfg = ModelConfig::from_json(line.substr(8));
  RC_CHECK(std::getline(in, line) && line.rfind("tensors: ", 0) == 0,
           "checkpoint missing tensor count");
  const size_t count = std::stoull(line.substr(9));

  struct Row {
    std::string name;
    std::vector<Index> shape;
    int64_t offset;
    int64_t size;
  };
  std::vector<Row> rows;
  rows.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    RC_CHECK(std::getline(in, line), "checkpoint directory truncated");
    std::istringstream ls(line);
    Row r;
    int rank = 0;
    ls >> r.name >> rank;
    r.shape.resize(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) ls >> r.shape[static_cast<size_t>(d)];
    ls >> r.offset >> r.size;
    RC_CHECK(!ls.fail(), "bad checkpoint directory row: " << line);
    rows.push_back(std::move(r));
  }
  RC_CHECK(std::getline(in, line) && line.rfind("payload: ", 0) == 0,
           "checkpoint missing payload size");
  RC_CHECK(std::getline(in, line) && line == "---", "checkpoint missing payload separator");

  auto model = std::make_unique<Model>(cfg, 0);
  const auto& entries = model->store().entries();
  RC_CHECK(entries.size() == rows.size(),
           "checkpoint holds " << rows.size() << " tensors, model expects " << entries.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    Tensor& t = *entries[i].tensor;
    RC_CHECK(entries[i].name == r.name, "checkpoint tensor '" << r.name << "' does not match '"
                                                              << entries[i].name << "'");
    RC_CHECK(t.shape() == r.shape && t.size() == r.size,
             "checkpoint tensor '" << r.name << "' has shape " << shape_str(r.shape)
                                   << ", model expects " << shape_str(t.shape()));
    std::vector<float> buf(static_cast<size_t>(r.size));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    RC_CHECK(in.good(), "checkpoint payload truncated at '" << r.name << "'");
    for (Index c = 0; c < t.size(); ++c) t.at(c) = static_cast<double>(buf[static_cast<size_t>(c)]);
  }
  return model;
}

}  // namespace res2ctx
