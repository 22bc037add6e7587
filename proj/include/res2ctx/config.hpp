// res2ctx/config.hpp

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

#include <map>
#include <string>
#include <vector>

#include "res2ctx/audio.hpp"
#include "res2ctx/metrics.hpp"
#include "res2ctx/model.hpp"
#include "res2ctx/training.hpp"

namespace res2ctx {

// Flat key=value run configuration with a fixed, documented key set.
// Unknown keys are rejected; values are validated on assignment and kept as
// written, so serialize -> parse -> serialize is a byte-for-byte fixed point.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // All keys in sorted order, one "key=value" line each.
  std::string serialize() const;

  // Typed views over the flat map.
  ModelConfig model_config(Index num_classes = 0) const;
  TrainConfig train_config() const;
  SynthConfig synth_config() const;
  DcfParams dcf_params() const;

  // Key names with their defaults, for --help style listings.
  static std::vector<std::pair<std::string, std::string>> documented_keys();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace res2ctx
