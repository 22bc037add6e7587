// tools/res2ctx_main.cpp

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

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include "CLI11.hpp"

#include "res2ctx/config.hpp"
#include "res2ctx/gradcheck.hpp"
#include "res2ctx/metrics.hpp"

namespace fs = std::filesystem;
using namespace res2ctx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

struct Overrides {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> kv;  // applied in order, flags win
};

void add_override(CLI::App* cmd, Overrides& ov, const std::string& flag, const std::string& key,
                  const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&ov, key](const std::string& v) { ov.kv.emplace_back(key, v); }, help);
}

void add_flag_override(CLI::App* cmd, Overrides& ov, const std::string& flag,
                       const std::string& key, const std::string& help) {
  cmd->add_flag_callback(
      flag, [&ov, key]() { ov.kv.emplace_back(key, "true"); }, help);
}

RunConfig resolve_config(const Overrides& ov) {
  RunConfig cfg = ov.config_path.empty() ? RunConfig() : RunConfig::from_file(ov.config_path);
  for (const auto& [key, value] : ov.kv) cfg.set(key, value);
  return cfg;
}

int pipeline_threads(int batch) {
  const char* env = std::getenv("RES2CTX_THREADS");
  if (env == nullptr) return 1;
  int v = 0;
  const auto res = std::from_chars(env, env + std::string(env).size(), v);
  RC_CHECK(res.ec == std::errc() && v >= 1, "RES2CTX_THREADS must be a positive integer, got '"
                                                << env << "'");
  return std::min(v, std::max(batch, 1));
}

// Speakers mapped to class indices in sorted-name order, so labels do not
// depend on manifest row order.
std::vector<Utterance> load_manifest_corpus(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  RC_CHECK(!entries.empty(), "manifest '" << manifest_path << "' is empty");
  std::map<std::string, int> speaker_ids;
  for (const auto& e : entries) speaker_ids.emplace(e.speaker, 0);
  int next = 0;
  for (auto& [name, id] : speaker_ids) id = next++;
  std::vector<Utterance> corpus;
  corpus.reserve(entries.size());
  for (const auto& e : entries) {
    Utterance u;
    u.id = utterance_id(e.path);
    u.speaker = speaker_ids.at(e.speaker);
    u.wav = read_wav(e.path);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_gradcheck(const RunConfig& cfg) {
  const auto rows = run_gradcheck_suites(static_cast<uint64_t>(cfg.get_int("seed")));
  std::ostringstream report;
  report << "check\tmax_rel_err\ttolerance\tstatus\n";
  bool all_pass = true;
  for (const auto& row : rows) {
    report << row.name << "\t" << format_double(row.max_rel_err) << "\t"
           << format_double(row.tolerance) << "\t" << (row.pass ? "pass" : "FAIL") << "\n";
    all_pass = all_pass && row.pass;
  }
  std::cout << report.str();
  if (!cfg.get("out").empty()) {
    std::ofstream out(cfg.get("out"));
    RC_CHECK(out.good(), "cannot open '" << cfg.get("out") << "' for writing");
    out << report.str();
  }
  std::cout << (all_pass ? "all checks passed" : "GRADIENT CHECKS FAILED") << " ("
            << rows.size() << " checks)\n";
  return all_pass ? kExitOk : kExitNumeric;
}

int cmd_paramcount(const std::string& variant_name_str, int64_t width, int64_t scale) {
  ModelConfig cfg;
  cfg.variant = parse_variant(variant_name_str);
  cfg.width = width;
  cfg.scale = scale;
  if (width < 256) {  // toy widths need smaller heads
    cfg.se_bottleneck = std::max<Index>(1, width / 2);
    cfg.attn_dim = std::max<Index>(1, width / 2);
  }
  Model model(cfg, 1);
  const int64_t count = model.param_count(false);
  std::cout << "variant " << variant_name_str << " width " << width << " scale " << scale << "\n";
  std::cout << "params_no_classifier " << count << "\n";

  static const std::map<std::string, double> kReference = {
      {"se_res2", 14.73e6},
      {"se_bi_res2", 15.72e6},
      {"bi_se_res2", 22.49e6},
      {"se_res2_bilstm", 15.73e6},
  };
  if (width == 1024 && scale == 8) {
    const double target = kReference.at(variant_name_str);
    const double dev_pct = 100.0 * (static_cast<double>(count) - target) / target;
    std::cout << "reference " << static_cast<int64_t>(target) << " deviation_pct "
              << format_double(dev_pct) << "\n";
  }
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg) {
  const std::string out_dir = cfg.get("out");
  RC_CHECK(!out_dir.empty(), "synth needs --out");
  SynthConfig synth = cfg.synth_config();
  RC_CHECK(synth.num_speakers >= 2 && synth.utts_per_speaker >= 1,
           "synth needs synth_speakers >= 2 and synth_utts >= 1");
  const int eval_utts = static_cast<int>(cfg.get_int("synth_eval_utts"));
  RC_CHECK(eval_utts < synth.utts_per_speaker,
           "synth_eval_utts must leave at least one training utterance per speaker");
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed"));

  fs::create_directories(out_dir + "/wav");
  const auto corpus = synth_corpus(synth, seed);
  std::vector<ManifestEntry> train_entries, eval_entries, cohort_entries;
  std::vector<std::string> eval_ids;
  std::vector<int> eval_speakers;
  for (const auto& utt : corpus) {
    const std::string path = out_dir + "/wav/" + utt.id + ".wav";
    write_wav(path, utt.wav);
    const std::string speaker = "spk" + std::to_string(utt.speaker);
    const int utt_index = std::stoi(utt.id.substr(utt.id.find("_utt") + 4));
    if (utt_index >= synth.utts_per_speaker - eval_utts) {
      eval_entries.push_back({path, speaker});
      eval_ids.push_back(utt.id);
      eval_speakers.push_back(utt.speaker);
    } else {
      train_entries.push_back({path, speaker});
      if (utt_index < 3) cohort_entries.push_back({path, speaker});
    }
  }
  write_manifest(out_dir + "/train_manifest.tsv", train_entries);
  if (!eval_entries.empty()) {
    write_manifest(out_dir + "/eval_manifest.tsv", eval_entries);
    write_manifest(out_dir + "/cohort_manifest.tsv", cohort_entries);

    // Trials over the held-out utterances: every same-speaker pair as a
    // target, an equal number of seeded cross-speaker pairs as nontargets.
    std::vector<Trial> trials;
    for (size_t i = 0; i < eval_ids.size(); ++i)
      for (size_t j = i + 1; j < eval_ids.size(); ++j)
        if (eval_speakers[i] == eval_speakers[j])
          trials.push_back({eval_ids[i], eval_ids[j], 1});
    const size_t targets = trials.size();
    Rng rng(Rng::mix(seed, 0x7e1a15u));
    std::set<std::pair<size_t, size_t>> seen;
    size_t guard = 0;
    while (trials.size() < 2 * targets && guard < 100 * targets + 1000) {
      ++guard;
      const size_t i = rng.uniform_int(eval_ids.size());
      const size_t j = rng.uniform_int(eval_ids.size());
      if (eval_speakers[i] == eval_speakers[j]) continue;
      if (!seen.insert({std::min(i, j), std::max(i, j)}).second) continue;
      trials.push_back({eval_ids[i], eval_ids[j], 0});
    }
    write_trials(out_dir + "/trials.txt", trials);
  }
  std::cout << "wrote " << corpus.size() << " utterances to " << out_dir << " (train "
            << train_entries.size() << ", eval " << eval_entries.size() << ")\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  std::vector<Utterance> corpus;
  if (!cfg.get("manifest").empty()) {
    corpus = load_manifest_corpus(cfg.get("manifest"));
  } else {
    SynthConfig synth = cfg.synth_config();
    RC_CHECK(synth.num_speakers >= 2 && synth.utts_per_speaker >= 1,
             "train needs either manifest= or synth_speakers=/synth_utts=");
    corpus = synth_corpus(synth, static_cast<uint64_t>(cfg.get_int("seed")));
  }
  int num_speakers = 0;
  for (const auto& u : corpus) num_speakers = std::max(num_speakers, u.speaker + 1);

  Model model(cfg.model_config(num_speakers), static_cast<uint64_t>(cfg.get_int("seed")));
  TrainConfig train_cfg = cfg.train_config();
  train_cfg.mel.n_mels = static_cast<int>(model.config().mel_bins);
  train_cfg.threads = pipeline_threads(train_cfg.batch);
  RC_CHECK(!train_cfg.out_dir.empty(), "train needs --out for the checkpoint and metrics log");

  fs::create_directories(train_cfg.out_dir);
  {
    std::ofstream snapshot(train_cfg.out_dir + "/run_config.txt");
    snapshot << cfg.serialize();
  }
  std::cout << "training " << variant_name(model.config().variant) << " width "
            << model.config().width << " on " << corpus.size() << " utterances from "
            << num_speakers << " speakers\n";
  const TrainResult result = train_loop(model, corpus, train_cfg);
  if (result.aborted) {
    std::cerr << "training aborted: " << result.abort_reason << "\n";
    if (!result.checkpoint_path.empty())
      std::cerr << "last good checkpoint: " << result.checkpoint_path << "\n";
    return kExitNumeric;
  }
  std::cout << "steps " << result.losses.size() << " final_loss "
            << format_double(result.losses.back()) << "\n";
  std::cout << "checkpoint " << result.checkpoint_path << "\n";
  return kExitOk;
}

int cmd_embed(const RunConfig& cfg) {
  RC_CHECK(!cfg.get("checkpoint").empty(), "embed needs --checkpoint");
  RC_CHECK(!cfg.get("manifest").empty(), "embed needs --manifest");
  RC_CHECK(!cfg.get("out").empty(), "embed needs --out");
  auto model = load_checkpoint(cfg.get("checkpoint"));
  const auto entries = read_manifest(cfg.get("manifest"));
  MelConfig mel;
  mel.n_mels = static_cast<int>(model->config().mel_bins);
  EmbeddingTable table;
  table.reserve(entries.size());
  for (const auto& e : entries) {
    const Waveform wav = read_wav(e.path);
    table.emplace_back(utterance_id(e.path), model->embed_eval(logmel(wav, mel)));
  }
  write_embedding_table(cfg.get("out"), table);
  std::cout << "wrote " << table.size() << " embeddings to " << cfg.get("out") << "\n";
  return kExitOk;
}

int cmd_score(const RunConfig& cfg) {
  RC_CHECK(!cfg.get("emb").empty(), "score needs --emb (embedding table)");
  RC_CHECK(!cfg.get("trials").empty(), "score needs --trials");
  RC_CHECK(!cfg.get("out").empty(), "score needs --out");
  const EmbeddingTable table = read_embedding_table(cfg.get("emb"));
  std::unordered_map<std::string, const Tensor*> by_id;
  for (const auto& [id, emb] : table) by_id[id] = &emb;
  auto lookup = [&](const std::string& id) -> const Tensor& {
    auto it = by_id.find(id);
    RC_CHECK(it != by_id.end(), "no embedding for id '" << id << "'");
    return *it->second;
  };

  const auto trials = read_trials(cfg.get("trials"));
  const bool use_asnorm = cfg.get_bool("asnorm");
  std::vector<Tensor> cohort;
  if (use_asnorm) {
    RC_CHECK(!cfg.get("cohort").empty(), "score --asnorm needs --cohort (embedding table)");
    for (auto& [id, emb] : read_embedding_table(cfg.get("cohort"))) cohort.push_back(emb);
    RC_CHECK(cohort.size() >= 2, "AS-norm cohort needs at least two embeddings");
  }
  const int top_k = static_cast<int>(cfg.get_int("asnorm_k"));

  std::vector<ScoreRecord> records;
  records.reserve(trials.size());
  int64_t degenerate = 0;
  for (const Trial& t : trials) {
    const double raw = cosine_score(lookup(t.enroll), lookup(t.test));
    double value = raw;
    if (use_asnorm) {
      const AsNormResult r = as_norm(raw, lookup(t.enroll), lookup(t.test), cohort, top_k);
      value = r.score;
      degenerate += r.degenerate ? 1 : 0;
    }
    records.push_back({t.enroll, t.test, value});
  }
  write_scores(cfg.get("out"), records);
  if (use_asnorm) {
    std::ofstream meta(cfg.get("out") + ".meta");
    meta << "asnorm_k\t" << top_k << "\n";
    meta << "cohort_size\t" << cohort.size() << "\n";
    meta << "degenerate_trials\t" << degenerate << "\n";
    if (degenerate > 0)
      std::cerr << "warning: sigma floor applied on " << degenerate << " trials\n";
  }
  std::cout << "wrote " << records.size() << " scores to " << cfg.get("out") << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& det_path) {
  RC_CHECK(!cfg.get("scores").empty(), "eval needs --scores");
  RC_CHECK(!cfg.get("trials").empty(), "eval needs --trials");
  const auto trials = read_trials(cfg.get("trials"));
  const auto records = read_scores(cfg.get("scores"));
  const auto [scores, labels] = join_trials_scores(trials, records);
  const double eer_value = eer(scores, labels);
  const double dcf_value = min_dcf(scores, labels, cfg.dcf_params());
  std::cout << "eer\t" << format_double(eer_value) << "\n";
  std::cout << "min_dcf\t" << format_double(dcf_value) << "\n";
  if (!cfg.get("out").empty()) {
    std::ofstream out(cfg.get("out"));
    RC_CHECK(out.good(), "cannot open '" << cfg.get("out") << "' for writing");
    out << "metric\tvalue\n";
    out << "eer\t" << format_double(eer_value) << "\n";
    out << "min_dcf\t" << format_double(dcf_value) << "\n";
  }
  if (!det_path.empty()) write_det_tsv(det_path, det_curve(scores, labels));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speaker-embedding workbench: context-modeling blocks, training, verification"};
  app.require_subcommand(1);

  Overrides ov;

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "run every finite-difference suite");
  gradcheck_cmd->add_option("--config", ov.config_path, "key=value config file");
  add_override(gradcheck_cmd, ov, "--seed", "seed", "rng seed");
  add_override(gradcheck_cmd, ov, "--out", "out", "TSV report path");

  auto* paramcount_cmd = app.add_subcommand("paramcount", "count learnable parameters");
  std::string pc_variant = "se_res2";
  int64_t pc_width = 1024, pc_scale = 8;
  paramcount_cmd->add_option("variant", pc_variant,
                             "se_res2 | se_bi_res2 | bi_se_res2 | se_res2_bilstm");
  paramcount_cmd->add_option("width", pc_width, "channel count C");
  paramcount_cmd->add_option("--scale", pc_scale, "subset count N");

  auto* synth_cmd = app.add_subcommand("synth", "materialize a synthetic corpus");
  synth_cmd->add_option("--config", ov.config_path, "key=value config file");
  add_override(synth_cmd, ov, "--seed", "seed", "rng seed");
  add_override(synth_cmd, ov, "--out", "out", "output directory");
  add_override(synth_cmd, ov, "--speakers", "synth_speakers", "speaker count");
  add_override(synth_cmd, ov, "--utts", "synth_utts", "utterances per speaker");
  add_override(synth_cmd, ov, "--eval-utts", "synth_eval_utts", "held-out utterances per speaker");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", ov.config_path, "key=value config file");
  add_override(train_cmd, ov, "--seed", "seed", "rng seed");
  add_override(train_cmd, ov, "--variant", "variant", "block variant");
  add_override(train_cmd, ov, "--width", "width", "channel count C");
  add_override(train_cmd, ov, "--steps", "steps", "training steps");
  add_override(train_cmd, ov, "--batch", "batch", "batch size");
  add_override(train_cmd, ov, "--manifest", "manifest", "training manifest");
  add_override(train_cmd, ov, "--out", "out", "output directory");

  auto* embed_cmd = app.add_subcommand("embed", "extract embeddings for a manifest");
  embed_cmd->add_option("--config", ov.config_path, "key=value config file");
  add_override(embed_cmd, ov, "--checkpoint", "checkpoint", "model checkpoint");
  add_override(embed_cmd, ov, "--manifest", "manifest", "utterance manifest");
  add_override(embed_cmd, ov, "--out", "out", "embedding table path");

  auto* score_cmd = app.add_subcommand("score", "score a trial list");
  score_cmd->add_option("--config", ov.config_path, "key=value config file");
  add_override(score_cmd, ov, "--emb", "emb", "embedding table");
  add_override(score_cmd, ov, "--trials", "trials", "trial list");
  add_override(score_cmd, ov, "--out", "out", "score file path");
  add_flag_override(score_cmd, ov, "--asnorm", "asnorm", "apply adaptive score normalization");
  add_override(score_cmd, ov, "--cohort", "cohort", "cohort embedding table");
  add_override(score_cmd, ov, "--asnorm-k", "asnorm_k", "top-K cohort size");

  auto* eval_cmd = app.add_subcommand("eval", "compute EER and minDCF");
  eval_cmd->add_option("--config", ov.config_path, "key=value config file");
  add_override(eval_cmd, ov, "--scores", "scores", "score file");
  add_override(eval_cmd, ov, "--trials", "trials", "trial list");
  add_override(eval_cmd, ov, "--out", "out", "metrics TSV path");
  std::string det_path;
  eval_cmd->add_option("--det", det_path, "also export the DET curve TSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(resolve_config(ov));
    if (paramcount_cmd->parsed()) return cmd_paramcount(pc_variant, pc_width, pc_scale);
    if (synth_cmd->parsed()) return cmd_synth(resolve_config(ov));
    if (train_cmd->parsed()) return cmd_train(resolve_config(ov));
    if (embed_cmd->parsed()) return cmd_embed(resolve_config(ov));
    if (score_cmd->parsed()) return cmd_score(resolve_config(ov));
    if (eval_cmd->parsed()) return cmd_eval(resolve_config(ov), det_path);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
