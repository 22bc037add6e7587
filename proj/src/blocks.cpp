// res2ctx/blocks.cpp

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

#include "res2ctx/blocks.hpp"

namespace res2ctx {

BlockVariant parse_variant(const std::string& name) {
  if (name == "se_res2") return BlockVariant::kSeRes2;
  if (name == "se_bi_res2") return BlockVariant::kSeBiRes2;
  if (name == "bi_se_res2") return BlockVariant::kBiSeRes2;
  if (name == "se_res2_bilstm") return BlockVariant::kSeRes2BiLstm;
  throw ValidationError("unknown block variant '" + name +
                        "' (expected se_res2, se_bi_res2, bi_se_res2, se_res2_bilstm)");
}

std::string variant_name(BlockVariant v) {
  switch (v) {
    case BlockVariant::kSeRes2: return "se_res2";
    case BlockVariant::kSeBiRes2: return "se_bi_res2";
    case BlockVariant::kBiSeRes2: return "bi_se_res2";
    case BlockVariant::kSeRes2BiLstm: return "se_res2_bilstm";
  }
  throw ValidationError("unknown block variant");
}

void BlockConfig::validate() const {
  RC_CHECK(channels >= 1, "block channels must be positive");
  RC_CHECK(scale >= 2, "scale must be at least 2, got " << scale);
  RC_CHECK(channels % scale == 0,
           "scale " << scale << " does not divide " << channels << " channels");
  RC_CHECK(kernel % 2 == 1, "kernel size must be odd, got " << kernel);
  RC_CHECK(dilation >= 1, "dilation must be positive, got " << dilation);
  RC_CHECK(se_bottleneck >= 1 && se_bottleneck < channels, "SE bottleneck must compress");
  if (variant == BlockVariant::kSeRes2BiLstm) {
    RC_CHECK(channels % (2 * scale) == 0, "Bi-LSTM hidden size C/(2N) must be an integer: C="
                                              << channels << ", N=" << scale);
  }
}

namespace {

void check_subsets(const std::vector<std::vector<Var>>& subsets, size_t unit_count) {
  RC_CHECK(!subsets.empty(), "res2 recurrence on an empty batch");
  const size_t n = subsets[0].size();
  RC_CHECK(n >= 2, "res2 recurrence needs at least two subsets");
  for (const auto& item : subsets)
    RC_CHECK(item.size() == n, "res2 recurrence: subset counts differ across the batch");
  RC_CHECK(unit_count == n - 1, "res2 recurrence: " << unit_count << " kernels for " << n
                                                    << " subsets (need N-1)");
}

}  // namespace

std::vector<std::vector<Var>> res2_forward_batch(Binder& b,
                                                 const std::vector<std::vector<Var>>& subsets,
                                                 std::vector<ConvBnRelu>& units, Mode mode) {
  check_subsets(subsets, units.size());
  const size_t items = subsets.size();
  const size_t n = subsets[0].size();
  std::vector<std::vector<Var>> outs(items, std::vector<Var>(n));
  for (size_t it = 0; it < items; ++it) outs[it][0] = subsets[it][0];
  for (size_t i = 1; i < n; ++i) {
    std::vector<Var> pre(items);
    for (size_t it = 0; it < items; ++it) {
      pre[it] = i == 1 ? subsets[it][1] : add(subsets[it][i], outs[it][i - 1]);
    }
    auto ys = units[i - 1].forward(b, pre, mode);
    for (size_t it = 0; it < items; ++it) outs[it][i] = ys[it];
  }
  return outs;
}

std::vector<Var> res2_forward(Binder& b, const std::vector<Var>& subsets,
                              std::vector<ConvBnRelu>& units, Mode mode) {
  return res2_forward_batch(b, {subsets}, units, mode)[0];
}

std::vector<std::vector<Var>> res2_rev_forward_batch(Binder& b,
                                                     const std::vector<std::vector<Var>>& subsets,
                                                     std::vector<ConvBnRelu>& units, Mode mode) {
  check_subsets(subsets, units.size());
  const size_t items = subsets.size();
  const size_t n = subsets[0].size();
  std::vector<std::vector<Var>> outs(items, std::vector<Var>(n));
  for (size_t it = 0; it < items; ++it) outs[it][n - 1] = subsets[it][n - 1];
  for (size_t step = 1; step < n; ++step) {
    const size_t i = n - 1 - step;  // subset produced this step
    std::vector<Var> pre(items);
    for (size_t it = 0; it < items; ++it) {
      pre[it] = i == n - 2 ? subsets[it][i] : add(subsets[it][i], outs[it][i + 1]);
    }
    auto ys = units[i].forward(b, pre, mode);
    for (size_t it = 0; it < items; ++it) outs[it][i] = ys[it];
  }
  return outs;
}

std::vector<Var> res2_rev_forward(Binder& b, const std::vector<Var>& subsets,
                                  std::vector<ConvBnRelu>& units, Mode mode) {
  return res2_rev_forward_batch(b, {subsets}, units, mode)[0];
}

namespace {

std::vector<ConvBnRelu> make_units(ParamStore& store, const std::string& prefix,
                                   const BlockConfig& cfg, Index first_index, Rng& rng) {
  std::vector<ConvBnRelu> units;
  units.reserve(static_cast<size_t>(cfg.scale - 1));
  const Index width = cfg.channels / cfg.scale;
  for (Index i = 0; i < cfg.scale - 1; ++i) {
    units.emplace_back(store, prefix + std::to_string(first_index + i), width, width, cfg.kernel,
                       cfg.dilation, rng);
  }
  return units;
}

void check_channels(Binder& b, const std::vector<Var>& xs, Index channels) {
  RC_CHECK(!xs.empty(), "block forward on an empty batch");
  for (Var x : xs) {
    const Tensor& xv = b.g.value(x);
    RC_CHECK(xv.rank() == 2 && xv.dim(0) == channels,
             "block expects " << channels << " channels, got " << shape_str(xv.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SeRes2Block
// ---------------------------------------------------------------------------

SeRes2Block::SeRes2Block(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                         Rng& rng)
    : cfg_(cfg),
      f1_(store, prefix + ".f1", cfg.channels, cfg.channels, 1, 1, rng),
      f2_(store, prefix + ".f2", cfg.channels, cfg.channels, 1, 1, rng),
      units_(make_units(store, prefix + ".res2.k", cfg, 2, rng)),
      se_(store, prefix + ".se", cfg.channels, cfg.se_bottleneck, rng) {
  cfg_.validate();
}

std::vector<Var> SeRes2Block::forward(Binder& b, const std::vector<Var>& xs, Mode mode) {
  check_channels(b, xs, cfg_.channels);
  auto hs = f1_.forward(b, xs, mode);
  std::vector<std::vector<Var>> subsets;
  subsets.reserve(hs.size());
  for (Var h : hs) subsets.push_back(split_channels(h, cfg_.scale));
  auto ys = res2_forward_batch(b, subsets, units_, mode);
  std::vector<Var> merged;
  merged.reserve(ys.size());
  for (auto& item : ys) merged.push_back(concat_channels(item));
  auto outs = f2_.forward(b, merged, mode);
  for (size_t it = 0; it < outs.size(); ++it) {
    outs[it] = add(se_.forward(b, outs[it]), xs[it]);
  }
  return outs;
}

// ---------------------------------------------------------------------------
// SeBiRes2Block
// ---------------------------------------------------------------------------

SeBiRes2Block::SeBiRes2Block(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                             Rng& rng)
    : cfg_(cfg),
      f1_(store, prefix + ".f1", cfg.channels, cfg.channels, 1, 1, rng),
      f2_(store, prefix + ".f2", cfg.channels, cfg.channels, 1, 1, rng),
      fwd_units_(make_units(store, prefix + ".res2.k", cfg, 2, rng)),
      rev_units_(make_units(store, prefix + ".res2.r", cfg, 1, rng)),
      se_(store, prefix + ".se", cfg.channels, cfg.se_bottleneck, rng) {
  cfg_.validate();
}

std::vector<Var> SeBiRes2Block::forward(Binder& b, const std::vector<Var>& xs, Mode mode) {
  check_channels(b, xs, cfg_.channels);
  auto hs = f1_.forward(b, xs, mode);
  std::vector<std::vector<Var>> subsets;
  subsets.reserve(hs.size());
  for (Var h : hs) subsets.push_back(split_channels(h, cfg_.scale));
  auto fwd = res2_forward_batch(b, subsets, fwd_units_, mode);
  auto rev = res2_rev_forward_batch(b, subsets, rev_units_, mode);
  std::vector<Var> merged;
  merged.reserve(xs.size());
  for (size_t it = 0; it < xs.size(); ++it) {
    std::vector<Var> sums(fwd[it].size());
    for (size_t i = 0; i < fwd[it].size(); ++i) sums[i] = add(fwd[it][i], rev[it][i]);
    merged.push_back(concat_channels(sums));
  }
  auto outs = f2_.forward(b, merged, mode);
  for (size_t it = 0; it < outs.size(); ++it) {
    outs[it] = add(se_.forward(b, outs[it]), xs[it]);
  }
  return outs;
}

// ---------------------------------------------------------------------------
// BiSeRes2Block
// ---------------------------------------------------------------------------

namespace {
BlockConfig stream_config(const BlockConfig& cfg) {
  BlockConfig c = cfg;
  c.variant = BlockVariant::kSeRes2;
  return c;
}
}  // namespace

BiSeRes2Block::BiSeRes2Block(ParamStore& store, const std::string& prefix, const BlockConfig& cfg,
                             Rng& rng)
    : stream1_(store, prefix + ".stream1", stream_config(cfg), rng),
      stream2_(store, prefix + ".stream2", stream_config(cfg), rng) {}

std::vector<Var> BiSeRes2Block::forward(Binder& b, const std::vector<Var>& xs, Mode mode) {
  std::vector<Var> flipped;
  flipped.reserve(xs.size());
  for (Var x : xs) flipped.push_back(flip_channels(x));
  auto first = stream1_.forward(b, xs, mode);
  auto second = stream2_.forward(b, flipped, mode);
  std::vector<Var> outs(xs.size());
  for (size_t it = 0; it < xs.size(); ++it) outs[it] = add(first[it], second[it]);
  return outs;
}

// ---------------------------------------------------------------------------
// SeRes2BiLstmBlock
// ---------------------------------------------------------------------------

namespace {
std::vector<BiLstm> make_lstms(ParamStore& store, const std::string& prefix,
                               const BlockConfig& cfg, Rng& rng) {
  std::vector<BiLstm> lstms;
  lstms.reserve(static_cast<size_t>(cfg.scale - 1));
  const Index width = cfg.channels / cfg.scale;
  const Index hidden = cfg.channels / (2 * cfg.scale);
  for (Index i = 0; i < cfg.scale - 1; ++i) {
    lstms.emplace_back(store, prefix + std::to_string(i + 2), width, hidden, rng);
  }
  return lstms;
}
}  // namespace

SeRes2BiLstmBlock::SeRes2BiLstmBlock(ParamStore& store, const std::string& prefix,
                                     const BlockConfig& cfg, Rng& rng)
    : cfg_(cfg),
      f1_(store, prefix + ".f1", cfg.channels, cfg.channels, 1, 1, rng),
      f2_(store, prefix + ".f2", cfg.channels, cfg.channels, 1, 1, rng),
      lstms_(make_lstms(store, prefix + ".res2.l", cfg, rng)),
      se_(store, prefix + ".se", cfg.channels, cfg.se_bottleneck, rng) {
  cfg_.validate();
}

std::vector<Var> SeRes2BiLstmBlock::forward(Binder& b, const std::vector<Var>& xs, Mode mode) {
  check_channels(b, xs, cfg_.channels);
  auto hs = f1_.forward(b, xs, mode);
  std::vector<Var> merged;
  merged.reserve(hs.size());
  for (Var h : hs) {
    auto subsets = split_channels(h, cfg_.scale);
    const size_t n = subsets.size();
    std::vector<Var> ys(n);
    ys[0] = subsets[0];
    for (size_t i = 1; i < n; ++i) {
      Var pre = i == 1 ? subsets[1] : add(subsets[i], ys[i - 1]);
      ys[i] = lstms_[i - 1].forward(b, pre);
    }
    merged.push_back(concat_channels(ys));
  }
  auto outs = f2_.forward(b, merged, mode);
  for (size_t it = 0; it < outs.size(); ++it) {
    outs[it] = add(se_.forward(b, outs[it]), xs[it]);
  }
  return outs;
}

std::unique_ptr<ContextBlock> make_block(ParamStore& store, const std::string& prefix,
                                         const BlockConfig& cfg, Rng& rng) {
  cfg.validate();
  switch (cfg.variant) {
    case BlockVariant::kSeRes2:
      return std::make_unique<SeRes2Block>(store, prefix, cfg, rng);
    case BlockVariant::kSeBiRes2:
      return std::make_unique<SeBiRes2Block>(store, prefix, cfg, rng);
    case BlockVariant::kBiSeRes2:
      return std::make_unique<BiSeRes2Block>(store, prefix, cfg, rng);
    case BlockVariant::kSeRes2BiLstm:
      return std::make_unique<SeRes2BiLstmBlock>(store, prefix, cfg, rng);
  }
  throw ValidationError("unknown block variant");
}

}  // namespace res2ctx
