// res2ctx/audio.hpp

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

#include <string>
#include <vector>

#include "res2ctx/rng.hpp"
#include "res2ctx/tensor.hpp"

namespace res2ctx {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

// RIFF PCM 16-bit mono reader/writer.  Anything else is rejected with a
// clear error; samples map to [-1, 1).
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// Random contiguous 2-second crop (32000 samples at 16 kHz).  Shorter inputs
// wrap-pad from the start, so the head of the result equals the source.
Waveform crop_2s(const Waveform& w, Rng& rng);

struct NoiseReverbConfig {
  double noise_prob = 1.0;
  double snr_min_db = 5.0;   // +inf disables noise entirely
  double snr_max_db = 20.0;
  double reverb_prob = 0.5;
  double reverb_tail_s = 0.25;  // 0 reduces the impulse response to a unit tap
};

// Additive Gaussian noise at an exactly realized SNR drawn from the range,
// and/or convolution with a sparse exponentially decaying synthetic impulse
// response.  The result is peak-normalized only if it exceeds full scale.
Waveform augment_noise_reverb(const Waveform& w, const NoiseReverbConfig& cfg, Rng& rng);

struct Utterance {
  std::string id;
  int speaker = 0;
  Waveform wav;
};

struct SynthConfig {
  int num_speakers = 20;
  int utts_per_speaker = 50;
  double min_dur_s = 2.4;
  double max_dur_s = 3.6;
  int sample_rate = 16000;
};

// Synthetic speakers: a fixed randomized harmonic source per speaker (f0 and
// formant-like spectral envelope) with per-utterance jitter, vibrato and an
// amplitude envelope.  Bit-identical for identical (seed, indices).
std::vector<Utterance> synth_corpus(const SynthConfig& cfg, uint64_t seed);
Waveform synth_utterance(const SynthConfig& cfg, uint64_t seed, int speaker, int utt);

// Corpus manifest: one "path<TAB>speaker_id" record per line.
struct ManifestEntry {
  std::string path;
  std::string speaker;
};
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Utterance id for a manifest row: the file stem of its path.
std::string utterance_id(const std::string& path);

}  // namespace res2ctx
