// tests/test_features.cpp

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
#include <complex>

#include "res2ctx/features.hpp"

using namespace res2ctx;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform tone(double freq_hz, double seconds, double amp = 0.5) {
  Waveform w;
  w.sample_rate = 16000;
  const size_t n = static_cast<size_t>(seconds * w.sample_rate);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * kPi * freq_hz * i / w.sample_rate);
  return w;
}

// Independent direct-DFT mel oracle for one frame: own window, O(n^2) DFT,
// own HTK-mel triangles, natural log with the same floor.
std::vector<double> direct_dft_logmel_frame(const Waveform& w, size_t start,
                                            const MelConfig& cfg) {
  const int win = 400, nfft = cfg.fft_size, bins = nfft / 2 + 1;
  std::vector<double> frame(static_cast<size_t>(nfft), 0.0);
  for (int i = 0; i < win; ++i) {
    const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));
    frame[static_cast<size_t>(i)] = w.samples[start + static_cast<size_t>(i)] * window;
  }
  std::vector<double> power(static_cast<size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int n = 0; n < nfft; ++n) {
      const double ang = -2.0 * kPi * k * n / nfft;
      acc += frame[static_cast<size_t>(n)] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    power[static_cast<size_t>(k)] = std::norm(acc);
  }
  auto hz2mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel2hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double lo = hz2mel(cfg.fmin_hz), hi = hz2mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<size_t>(cfg.n_mels) + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m)
    edges[static_cast<size_t>(m)] = mel2hz(lo + (hi - lo) * m / (cfg.n_mels + 1));
  std::vector<double> out(static_cast<size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    double acc = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * 16000.0 / nfft;
      double weight = 0.0;
      const double a = edges[static_cast<size_t>(m)], b = edges[static_cast<size_t>(m) + 1],
                   c = edges[static_cast<size_t>(m) + 2];
      if (f >= a && f <= b && b > a) weight = (f - a) / (b - a);
      else if (f > b && f <= c && c > b) weight = (c - f) / (c - b);
      acc += weight * power[static_cast<size_t>(k)];
    }
    out[static_cast<size_t>(m)] = std::log(std::max(acc, cfg.log_floor));
  }
  return out;
}

}  // namespace

TEST_CASE("frame count follows 1 + floor((len - win) / hop)") {
  MelConfig cfg;
  Waveform w = tone(440.0, 2.0);
  REQUIRE(w.samples.size() == 32000);
  const Tensor f = logmel(w, cfg);
  CHECK(f.dim(0) == 80);
  CHECK(f.dim(1) == 198);

  Waveform w2 = tone(440.0, 1.0);
  CHECK(logmel(w2, cfg).dim(1) == 1 + (16000 - 400) / 160);

  Waveform tiny;
  tiny.samples.resize(100);
  CHECK_THROWS_AS(logmel(tiny, cfg), ValidationError);
}

TEST_CASE("silent input hits the log floor everywhere") {
  MelConfig cfg;
  Waveform w;
  w.samples.assign(16000, 0.0);
  const Tensor f = logmel(w, cfg);
  const double expect = std::log(1e-10);
  for (Index i = 0; i < f.size(); ++i) CHECK(f.at(i) == expect);
}

TEST_CASE("a 1 kHz tone peaks in the mel bin containing 1 kHz, per the DFT oracle") {
  MelConfig cfg;
  Waveform w = tone(1000.0, 1.0);
  const Tensor f = logmel(w, cfg);
  const MelBank bank = mel_filterbank(cfg, 16000);

  const std::vector<double> oracle = direct_dft_logmel_frame(w, 10 * 160, cfg);
  Index oracle_argmax = 0;
  for (size_t m = 1; m < oracle.size(); ++m)
    if (oracle[m] > oracle[static_cast<size_t>(oracle_argmax)])
      oracle_argmax = static_cast<Index>(m);

  for (Index t : {Index(5), Index(10), Index(50)}) {
    Index impl_argmax = 0;
    for (Index m = 1; m < f.dim(0); ++m)
      if (f(m, t) > f(impl_argmax, t)) impl_argmax = m;
    CHECK(impl_argmax == oracle_argmax);
    // The winning triangle's support straddles 1 kHz.
    CHECK(bank.edges_hz[static_cast<size_t>(impl_argmax)] < 1000.0);
    CHECK(bank.edges_hz[static_cast<size_t>(impl_argmax) + 2] > 1000.0);
  }
}

TEST_CASE("implementation matches the direct-DFT oracle frame to high precision") {
  MelConfig cfg;
  Waveform w = tone(700.0, 0.5, 0.4);
  const Tensor f = logmel(w, cfg);
  const std::vector<double> oracle = direct_dft_logmel_frame(w, 3 * 160, cfg);
  for (Index m = 0; m < 80; ++m)
    CHECK(f(m, 3) == doctest::Approx(oracle[static_cast<size_t>(m)]).epsilon(1e-9));
}

TEST_CASE("logmel is deterministic and scale-monotone") {
  Waveform w = tone(300.0, 1.0, 0.2);
  MelConfig cfg;
  const Tensor a = logmel(w, cfg);
  const Tensor b = logmel(w, cfg);
  CHECK(a == b);

  Waveform louder = w;
  for (double& s : louder.samples) s *= 3.0;
  const Tensor c = logmel(louder, cfg);
  for (Index i = 0; i < a.size(); ++i) CHECK(c.at(i) >= a.at(i));
}

TEST_CASE("specaugment masks stay inside their budgets") {
  Rng data_rng(1);
  Tensor x = Tensor::randn({80, 60}, data_rng);
  SpecAugmentConfig cfg;

  Rng a(9), b(9);
  const Tensor m1 = specaugment(x, cfg, a);
  const Tensor m2 = specaugment(x, cfg, b);
  CHECK(m1 == m2);  // fixed seed, identical masks

  // Changed cells are confined to one frequency band and one time band.
  Index changed = 0;
  std::vector<bool> row_changed(80, false), col_changed(60, false);
  for (Index m = 0; m < 80; ++m)
    for (Index t = 0; t < 60; ++t)
      if (m1(m, t) != x(m, t)) {
        ++changed;
        row_changed[static_cast<size_t>(m)] = true;
        col_changed[static_cast<size_t>(t)] = true;
      }
  Index rows = 0, cols = 0;
  for (bool v : row_changed) rows += v;
  for (bool v : col_changed) cols += v;
  CHECK(changed <= 8 * 60 + 10 * 80);
  // Rows touched outside the time band belong to the frequency mask (<= 8);
  // columns touched outside the frequency band belong to the time mask (<= 10).
  CHECK(rows <= 8 + 80);  // every row may be hit inside the time band
  CHECK(cols <= 10 + 60);
  // Tighter: contiguous block structure.
  Index first_col = -1, last_col = -1;
  for (Index t = 0; t < 60; ++t) {
    bool whole_col = true;
    for (Index m = 0; m < 80; ++m)
      if (m1(m, t) == x(m, t)) whole_col = false;
    if (whole_col) {
      if (first_col < 0) first_col = t;
      last_col = t;
    }
  }
  if (first_col >= 0) CHECK(last_col - first_col + 1 <= 10);
}

TEST_CASE("zero mask budget leaves the map untouched") {
  Rng rng(2);
  Tensor x = Tensor::randn({80, 30}, rng);
  SpecAugmentConfig cfg;
  cfg.max_freq_mask = 0;
  cfg.max_time_mask = 0;
  Rng mrng(3);
  CHECK(specaugment(x, cfg, mrng) == x);
}

TEST_CASE("masked cells take the per-utterance mean, others stay exact") {
  Rng rng(4);
  Tensor x = Tensor::randn({80, 40}, rng);
  const double mean = x.flat().mean();
  SpecAugmentConfig cfg;
  Rng mrng(5);
  const Tensor y = specaugment(x, cfg, mrng);
  for (Index m = 0; m < 80; ++m)
    for (Index t = 0; t < 40; ++t) {
      if (y(m, t) != x(m, t)) CHECK(y(m, t) == mean);
    }
}

TEST_CASE("specaugment rejects maps smaller than the mask maxima") {
  Rng rng(6);
  Tensor x = Tensor::randn({80, 8}, rng);  // fewer frames than max_time_mask
  SpecAugmentConfig cfg;
  Rng mrng(7);
  CHECK_THROWS_AS(specaugment(x, cfg, mrng), ValidationError);
}
