// tests/test_audio.cpp

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
#include <cstdio>
#include <fstream>

#include "res2ctx/audio.hpp"
#include "res2ctx/features.hpp"

using namespace res2ctx;

TEST_CASE("wav write/read round trip within quantization") {
  Waveform w;
  w.sample_rate = 16000;
  Rng rng(1);
  w.samples.resize(4000);
  for (double& s : w.samples) s = 0.8 * rng.uniform(-1.0, 1.0);
  const std::string path = "roundtrip_test.wav";
  write_wav(path, w);
  const Waveform back = read_wav(path);
  REQUIRE(back.samples.size() == w.samples.size());
  CHECK(back.sample_rate == 16000);
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
  std::remove(path.c_str());
}

TEST_CASE("wav reader rejects unsupported formats") {
  const std::string path = "bad_test.wav";
  {
    // Stereo header.
    std::ofstream out(path, std::ios::binary);
    const unsigned char hdr[] = {
        'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ',
        16, 0, 0, 0, 1, 0, 2, 0, 0x80, 0x3e, 0, 0, 0, 0xfa, 0, 0, 4, 0, 16, 0,
        'd', 'a', 't', 'a', 4, 0, 0, 0, 0, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  }
  CHECK_THROWS_AS(read_wav(path), ValidationError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_wav("missing_file.wav"), ValidationError);
}

TEST_CASE("crop yields 32000 samples from long input") {
  Waveform w;
  w.samples.assign(5 * 16000, 0.0);
  for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = static_cast<double>(i);
  Rng rng(2);
  const Waveform crop = crop_2s(w, rng);
  CHECK(crop.samples.size() == 32000);
  // Contiguity: consecutive samples differ by exactly 1.
  for (size_t i = 1; i < 200; ++i) CHECK(crop.samples[i] - crop.samples[i - 1] == 1.0);
}

TEST_CASE("short input wrap-pads and keeps its head intact") {
  Waveform w;
  w.samples.resize(16000);
  Rng rng(3);
  for (double& s : w.samples) s = rng.uniform(-0.5, 0.5);
  Rng crop_rng(4);
  const Waveform crop = crop_2s(w, crop_rng);
  REQUIRE(crop.samples.size() == 32000);
  for (size_t i = 0; i < 16000; ++i) CHECK(crop.samples[i] == w.samples[i]);
  for (size_t i = 16000; i < 32000; ++i) CHECK(crop.samples[i] == w.samples[i - 16000]);
}

TEST_CASE("crop offset is deterministic under a fixed seed") {
  Waveform w;
  w.samples.resize(50000);
  Rng rng(5);
  for (double& s : w.samples) s = rng.gaussian();
  Rng a(77), b(77);
  const Waveform c1 = crop_2s(w, a);
  const Waveform c2 = crop_2s(w, b);
  CHECK(c1.samples == c2.samples);
  CHECK_THROWS_AS(crop_2s(Waveform{}, a), ValidationError);
}

TEST_CASE("infinite SNR and unit impulse leave the signal untouched") {
  Waveform w;
  w.samples.resize(8000);
  Rng rng(6);
  for (double& s : w.samples) s = 0.5 * rng.uniform(-1.0, 1.0);  // strictly inside full scale

  NoiseReverbConfig cfg;
  cfg.noise_prob = 1.0;
  cfg.snr_min_db = cfg.snr_max_db = std::numeric_limits<double>::infinity();
  cfg.reverb_prob = 0.0;
  Rng arng(7);
  CHECK(augment_noise_reverb(w, cfg, arng).samples == w.samples);

  NoiseReverbConfig cfg2;
  cfg2.noise_prob = 0.0;
  cfg2.reverb_prob = 1.0;
  cfg2.reverb_tail_s = 0.0;  // unit tap
  Rng brng(8);
  CHECK(augment_noise_reverb(w, cfg2, brng).samples == w.samples);
}

TEST_CASE("realized SNR matches the sampled target within half a dB") {
  Waveform w;
  w.samples.resize(32000);
  Rng rng(9);
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = 0.1 * std::sin(2.0 * 3.141592653589793 * 220.0 * i / 16000.0);

  NoiseReverbConfig cfg;
  cfg.noise_prob = 1.0;
  cfg.snr_min_db = cfg.snr_max_db = 10.0;
  cfg.reverb_prob = 0.0;
  Rng arng(10);
  const Waveform noisy = augment_noise_reverb(w, cfg, arng);
  double sig = 0.0, noise = 0.0;
  for (size_t i = 0; i < w.samples.size(); ++i) {
    sig += w.samples[i] * w.samples[i];
    const double d = noisy.samples[i] - w.samples[i];
    noise += d * d;
  }
  const double measured = 10.0 * std::log10(sig / noise);
  CHECK(std::abs(measured - 10.0) <= 0.5);
}

TEST_CASE("synthetic utterances are bit-identical under the same seed and indices") {
  SynthConfig cfg;
  cfg.num_speakers = 3;
  cfg.utts_per_speaker = 2;
  const Waveform a = synth_utterance(cfg, 123, 1, 0);
  const Waveform b = synth_utterance(cfg, 123, 1, 0);
  CHECK(a.samples == b.samples);
  const Waveform c = synth_utterance(cfg, 123, 1, 1);
  CHECK(a.samples != c.samples);
  const Waveform d = synth_utterance(cfg, 124, 1, 0);
  CHECK(a.samples != d.samples);
}

TEST_CASE("corpus size and labeling follow the configuration") {
  SynthConfig cfg;
  cfg.num_speakers = 4;
  cfg.utts_per_speaker = 3;
  cfg.min_dur_s = 2.2;
  cfg.max_dur_s = 2.6;
  const auto corpus = synth_corpus(cfg, 5);
  CHECK(corpus.size() == 12);
  CHECK(corpus[0].id == "spk000_utt000");
  CHECK(corpus[11].id == "spk003_utt002");
  CHECK(corpus[11].speaker == 3);
  for (const auto& u : corpus) {
    CHECK(u.wav.samples.size() >= 2.2 * 16000 - 1);
    CHECK(u.wav.samples.size() <= 2.6 * 16000 + 1);
  }
  SynthConfig bad = cfg;
  bad.num_speakers = 1;
  CHECK_THROWS_AS(synth_corpus(bad, 5), ValidationError);
}

TEST_CASE("within-speaker feature distance is below between-speaker distance") {
  SynthConfig cfg;
  cfg.num_speakers = 6;
  cfg.utts_per_speaker = 4;
  cfg.min_dur_s = 2.1;
  cfg.max_dur_s = 2.5;
  const auto corpus = synth_corpus(cfg, 31);
  MelConfig mel;

  // Time-averaged log-mel signature per utterance.
  std::vector<Eigen::VectorXd> sig;
  std::vector<int> spk;
  for (const auto& u : corpus) {
    const Tensor f = logmel(u.wav, mel);
    Eigen::VectorXd v = f.mat().rowwise().mean();
    sig.push_back(v);
    spk.push_back(u.speaker);
  }
  double within = 0.0, between = 0.0;
  int nw = 0, nb = 0;
  for (size_t i = 0; i < sig.size(); ++i) {
    for (size_t j = i + 1; j < sig.size(); ++j) {
      const double d = (sig[i] - sig[j]).norm();
      if (spk[i] == spk[j]) {
        within += d;
        ++nw;
      } else {
        between += d;
        ++nb;
      }
    }
  }
  within /= nw;
  between /= nb;
  INFO("within=", within, " between=", between);
  CHECK(within < between);
}

TEST_CASE("manifest io round trip and malformed rejection") {
  const std::string path = "manifest_test.tsv";
  std::vector<ManifestEntry> entries = {{"a/b/utt1.wav", "spk1"}, {"c.wav", "spk2"}};
  write_manifest(path, entries);
  const auto back = read_manifest(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].path == "a/b/utt1.wav");
  CHECK(back[0].speaker == "spk1");
  CHECK(back[1].speaker == "spk2");

  {
    std::ofstream out(path);
    out << "good.wav\tspk\n";
    out << "missing_tab_line\n";
  }
  try {
    read_manifest(path);
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);  // line number surfaces
  }
  std::remove(path.c_str());

  CHECK(utterance_id("a/b/utt1.wav") == "utt1");
  CHECK(utterance_id("utt2.wav") == "utt2");
  CHECK(utterance_id("noext") == "noext");
}
