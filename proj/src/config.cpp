// res2ctx/config.cpp

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

#include "res2ctx/config.hpp"

#include <fstream>
#include <sstream>

namespace res2ctx {

namespace {

enum class KeyType { kString, kInt, kDouble, kBool, kIntList, kVariant };

struct KeySpec {
  const char* name;
  KeyType type;
  const char* preset;
};

// The full documented key set.  Keys absent from a config file keep these
// presets.
const KeySpec kKeys[] = {
    {"variant", KeyType::kVariant, "se_res2"},
    {"width", KeyType::kInt, "512"},
    {"scale", KeyType::kInt, "8"},
    {"embed_dim", KeyType::kInt, "192"},
    {"mfa_dim", KeyType::kInt, "1536"},
    {"se_bottleneck", KeyType::kInt, "128"},
    {"attn_dim", KeyType::kInt, "128"},
    {"dilations", KeyType::kIntList, "2,3,4"},
    {"mel_bins", KeyType::kInt, "80"},
    {"seed", KeyType::kInt, "1"},
    {"manifest", KeyType::kString, ""},
    {"synth_speakers", KeyType::kInt, "0"},
    {"synth_utts", KeyType::kInt, "0"},
    {"synth_eval_utts", KeyType::kInt, "0"},
    {"synth_min_dur", KeyType::kDouble, "2.4"},
    {"synth_max_dur", KeyType::kDouble, "3.6"},
    {"batch", KeyType::kInt, "128"},
    {"steps", KeyType::kInt, "1000"},
    {"lr_base", KeyType::kDouble, "1e-8"},
    {"lr_max", KeyType::kDouble, "1e-3"},
    {"lr_step_size", KeyType::kInt, "65000"},
    {"margin", KeyType::kDouble, "0.2"},
    {"loss_scale", KeyType::kDouble, "30"},
    {"weight_decay", KeyType::kDouble, "2e-5"},
    {"checkpoint_interval", KeyType::kInt, "500"},
    {"augment", KeyType::kBool, "true"},
    {"noise_prob", KeyType::kDouble, "1"},
    {"snr_min_db", KeyType::kDouble, "5"},
    {"snr_max_db", KeyType::kDouble, "20"},
    {"reverb_prob", KeyType::kDouble, "0.5"},
    {"reverb_tail_s", KeyType::kDouble, "0.25"},
    {"specaugment", KeyType::kBool, "true"},
    {"freq_mask", KeyType::kInt, "8"},
    {"time_mask", KeyType::kInt, "10"},
    {"asnorm", KeyType::kBool, "false"},
    {"asnorm_k", KeyType::kInt, "100"},
    {"p_target", KeyType::kDouble, "0.01"},
    {"c_fa", KeyType::kDouble, "1"},
    {"c_miss", KeyType::kDouble, "1"},
    {"out", KeyType::kString, ""},
    {"checkpoint", KeyType::kString, ""},
    {"trials", KeyType::kString, ""},
    {"scores", KeyType::kString, ""},
    {"emb", KeyType::kString, ""},
    {"cohort", KeyType::kString, ""},
};

const KeySpec* find_key(const std::string& name) {
  for (const KeySpec& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(value, &used);
    RC_CHECK(used == value.size(), "config key '" << key << "': bad integer '" << value << "'");
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad integer '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    RC_CHECK(used == value.size(), "config key '" << key << "': bad number '" << value << "'");
    return v;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': bad number '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<Index> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<Index> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
  RC_CHECK(!out.empty(), "config key '" << key << "': empty list");
  return out;
}

void validate_value(const KeySpec& spec, const std::string& value) {
  switch (spec.type) {
    case KeyType::kString: return;
    case KeyType::kInt: (void)parse_int(spec.name, value); return;
    case KeyType::kDouble: (void)parse_double(spec.name, value); return;
    case KeyType::kBool: (void)parse_bool(spec.name, value); return;
    case KeyType::kIntList: (void)parse_int_list(spec.name, value); return;
    case KeyType::kVariant: (void)parse_variant(value); return;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeySpec& k : kKeys) values_[k.name] = k.preset;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  RC_CHECK(in.good(), "cannot open config '" << path << "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    RC_CHECK(eq != std::string::npos && eq > 0,
             "config line " << lineno << ": expected key=value, got '" << line << "'");
    cfg.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  RC_CHECK(spec != nullptr, "unknown config key '" << key << "'");
  validate_value(*spec, value);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  RC_CHECK(it != values_.end(), "unknown config key '" << key << "'");
  return it->second;
}

int64_t RunConfig::get_int(const std::string& key) const { return parse_int(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return parse_double(key, get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, get(key)); }

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

ModelConfig RunConfig::model_config(Index num_classes) const {
  ModelConfig cfg;
  cfg.variant = parse_variant(get("variant"));
  cfg.width = get_int("width");
  cfg.scale = get_int("scale");
  cfg.embed_dim = get_int("embed_dim");
  cfg.mfa_dim = get_int("mfa_dim");
  cfg.se_bottleneck = get_int("se_bottleneck");
  cfg.attn_dim = get_int("attn_dim");
  cfg.dilations = parse_int_list("dilations", get("dilations"));
  cfg.mel_bins = get_int("mel_bins");
  cfg.num_classes = num_classes;
  cfg.validate();
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.batch = static_cast<int>(get_int("batch"));
  cfg.steps = get_int("steps");
  cfg.seed = static_cast<uint64_t>(get_int("seed"));
  cfg.sched.base = get_double("lr_base");
  cfg.sched.max = get_double("lr_max");
  cfg.sched.step_size = get_int("lr_step_size");
  cfg.aam.margin = get_double("margin");
  cfg.aam.scale = get_double("loss_scale");
  cfg.adam.weight_decay = get_double("weight_decay");
  cfg.checkpoint_interval = get_int("checkpoint_interval");
  cfg.augment_enabled = get_bool("augment");
  cfg.augment.noise_prob = get_double("noise_prob");
  cfg.augment.snr_min_db = get_double("snr_min_db");
  cfg.augment.snr_max_db = get_double("snr_max_db");
  cfg.augment.reverb_prob = get_double("reverb_prob");
  cfg.augment.reverb_tail_s = get_double("reverb_tail_s");
  cfg.specaug_enabled = get_bool("specaugment");
  cfg.specaug.max_freq_mask = static_cast<int>(get_int("freq_mask"));
  cfg.specaug.max_time_mask = static_cast<int>(get_int("time_mask"));
  cfg.out_dir = get("out");
  return cfg;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig cfg;
  cfg.num_speakers = static_cast<int>(get_int("synth_speakers"));
  cfg.utts_per_speaker = static_cast<int>(get_int("synth_utts"));
  cfg.min_dur_s = get_double("synth_min_dur");
  cfg.max_dur_s = get_double("synth_max_dur");
  return cfg;
}

DcfParams RunConfig::dcf_params() const {
  DcfParams p;
  p.p_target = get_double("p_target");
  p.c_fa = get_double("c_fa");
  p.c_miss = get_double("c_miss");
  return p;
}

std::vector<std::pair<std::string, std::string>> RunConfig::documented_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeySpec& k : kKeys) out.emplace_back(k.name, k.preset);
  return out;
}

}  // namespace res2ctx
