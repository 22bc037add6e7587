// res2ctx/features.hpp

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

#include "res2ctx/audio.hpp"
#include "res2ctx/tensor.hpp"

namespace res2ctx {

struct MelConfig {
  int n_mels = 80;
  double win_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 512;
  double fmin_hz = 20.0;
  double fmax_hz = 7600.0;
  double log_floor = 1e-10;
};

// Log mel-filterbank energies: Hamming-windowed frames every hop, magnitude
// squared spectrum, triangular mel filters, natural log with a floor.
// T = 1 + floor((len - win) / hop).
Tensor logmel(const Waveform& w, const MelConfig& cfg);

// Triangular mel filterbank weights (n_mels x fft_size/2+1) plus the band
// edges (n_mels + 2 Hz points).  Exposed for bin-location assertions.
struct MelBank {
  Tensor weights;
  std::vector<double> edges_hz;
};
MelBank mel_filterbank(const MelConfig& cfg, int sample_rate);

struct SpecAugmentConfig {
  int max_freq_mask = 8;
  int max_time_mask = 10;
};

// One frequency band of width U{0..max_freq_mask} and one time band of width
// U{0..max_time_mask}, both filled with the per-utterance feature mean.
Tensor specaugment(const Tensor& feats, const SpecAugmentConfig& cfg, Rng& rng);

}  // namespace res2ctx
