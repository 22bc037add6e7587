// tests/test_config.cpp

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

#include "res2ctx/config.hpp"

using namespace res2ctx;

TEST_CASE("defaults cover every documented key") {
  RunConfig cfg;
  const auto keys = RunConfig::documented_keys();
  CHECK(keys.size() >= 40);
  for (const auto& [key, preset] : keys) CHECK(cfg.get(key) == preset);
  CHECK(cfg.get_int("width") == 512);
  CHECK(cfg.get_double("margin") == 0.2);
  CHECK(cfg.get_bool("specaugment"));
  CHECK_FALSE(cfg.get_bool("asnorm"));
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ValidationError);
  CHECK_THROWS_AS(cfg.set("width", "abc"), ValidationError);
  CHECK_THROWS_AS(cfg.set("width", "12x"), ValidationError);
  CHECK_THROWS_AS(cfg.set("margin", "big"), ValidationError);
  CHECK_THROWS_AS(cfg.set("specaugment", "yes"), ValidationError);
  CHECK_THROWS_AS(cfg.set("variant", "resnet"), ValidationError);
  CHECK_THROWS_AS(cfg.set("dilations", ""), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_text("width\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_file("missing.cfg"), ValidationError);
}

TEST_CASE("serialize -> parse -> serialize is a byte-for-byte fixed point") {
  RunConfig cfg;
  cfg.set("variant", "se_res2_bilstm");
  cfg.set("width", "0064");  // non-canonical spelling survives round trips
  cfg.set("lr_base", "1E-8");
  const std::string once = cfg.serialize();
  const std::string twice = RunConfig::from_text(once).serialize();
  CHECK(once == twice);
  CHECK(RunConfig::from_text(twice).serialize() == twice);
}

TEST_CASE("comments and blank lines are ignored, later values win") {
  const RunConfig cfg = RunConfig::from_text(
      "# a comment\n"
      "\n"
      "width=128\n"
      "width=256\n");
  CHECK(cfg.get_int("width") == 256);
}

TEST_CASE("typed views reflect the flat keys") {
  RunConfig cfg;
  cfg.set("variant", "bi_se_res2");
  cfg.set("width", "64");
  cfg.set("scale", "4");
  cfg.set("mfa_dim", "96");
  cfg.set("se_bottleneck", "16");
  cfg.set("attn_dim", "16");
  cfg.set("batch", "16");
  cfg.set("steps", "42");
  cfg.set("lr_step_size", "21");
  cfg.set("margin", "0.3");
  cfg.set("snr_min_db", "7");
  cfg.set("p_target", "0.05");
  cfg.set("synth_speakers", "5");
  cfg.set("synth_utts", "2");

  const ModelConfig mc = cfg.model_config(9);
  CHECK(mc.variant == BlockVariant::kBiSeRes2);
  CHECK(mc.width == 64);
  CHECK(mc.scale == 4);
  CHECK(mc.mfa_dim == 96);
  CHECK(mc.num_classes == 9);

  const TrainConfig tc = cfg.train_config();
  CHECK(tc.batch == 16);
  CHECK(tc.steps == 42);
  CHECK(tc.sched.step_size == 21);
  CHECK(tc.aam.margin == 0.3);
  CHECK(tc.augment.snr_min_db == 7);

  const SynthConfig sc = cfg.synth_config();
  CHECK(sc.num_speakers == 5);
  CHECK(sc.utts_per_speaker == 2);

  CHECK(cfg.dcf_params().p_target == 0.05);
}

TEST_CASE("model_config validates the assembled configuration") {
  RunConfig cfg;
  cfg.set("width", "20");  // not divisible by 2*scale
  CHECK_THROWS_AS(cfg.model_config(), ValidationError);
}
