// res2ctx/features.cpp

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

#include "res2ctx/features.hpp"

#include <cmath>
#include <complex>

namespace res2ctx {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 FFT, in place.
void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  RC_CHECK((n & (n - 1)) == 0 && n >= 2, "FFT size must be a power of two, got " << n);
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

MelBank mel_filterbank(const MelConfig& cfg, int sample_rate) {
  const int bins = cfg.fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  MelBank bank;
  bank.edges_hz.resize(static_cast<size_t>(cfg.n_mels) + 2);
  for (int m = 0; m < cfg.n_mels + 2; ++m) {
    bank.edges_hz[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
  }
  bank.weights = Tensor::zeros({cfg.n_mels, bins});
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = bank.edges_hz[static_cast<size_t>(m)];
    const double mid = bank.edges_hz[static_cast<size_t>(m) + 1];
    const double hi = bank.edges_hz[static_cast<size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f >= lo && f <= mid && mid > lo) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f <= hi && hi > mid) {
        w = (hi - f) / (hi - mid);
      }
      if (w > 0.0) bank.weights(m, k) = w;
    }
  }
  return bank;
}

Tensor logmel(const Waveform& w, const MelConfig& cfg) {
  const int win = static_cast<int>(std::lround(cfg.win_ms * w.sample_rate / 1000.0));
  const int hop = static_cast<int>(std::lround(cfg.hop_ms * w.sample_rate / 1000.0));
  RC_CHECK(win > hop && hop >= 1, "mel window must exceed the hop");
  RC_CHECK(cfg.fft_size >= win, "FFT size " << cfg.fft_size << " shorter than window " << win);
  const auto len = static_cast<int64_t>(w.samples.size());
  RC_CHECK(len >= win, "waveform too short for feature extraction: " << len << " samples, window "
                                                                     << win);
  const Index frames = 1 + static_cast<Index>((len - win) / hop);

  std::vector<double> window(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    window[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));

  const MelBank bank = mel_filterbank(cfg, w.sample_rate);
  const int bins = cfg.fft_size / 2 + 1;

  Tensor out({cfg.n_mels, frames});
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.fft_size));
  std::vector<double> power(static_cast<size_t>(bins));
  for (Index t = 0; t < frames; ++t) {
    const int64_t start = static_cast<int64_t>(t) * hop;
    for (int i = 0; i < cfg.fft_size; ++i) {
      const double s = i < win ? w.samples[static_cast<size_t>(start + i)] *
                                     window[static_cast<size_t>(i)]
                               : 0.0;
      buf[static_cast<size_t>(i)] = {s, 0.0};
    }
    fft_radix2(buf);
    for (int k = 0; k < bins; ++k) power[static_cast<size_t>(k)] = std::norm(buf[static_cast<size_t>(k)]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) acc += bank.weights(m, k) * power[static_cast<size_t>(k)];
      out(m, t) = std::log(std::max(acc, cfg.log_floor));
    }
  }
  return out;
}

Tensor specaugment(const Tensor& feats, const SpecAugmentConfig& cfg, Rng& rng) {
  RC_CHECK(feats.rank() == 2, "specaugment expects a rank-2 feature map");
  const Index n_mels = feats.dim(0), frames = feats.dim(1);
  RC_CHECK(n_mels >= cfg.max_freq_mask && frames >= cfg.max_time_mask,
           "feature map " << shape_str(feats.shape()) << " smaller than the mask maxima ("
                          << cfg.max_freq_mask << ", " << cfg.max_time_mask << ")");
  const Index fw = static_cast<Index>(rng.uniform_int(static_cast<uint64_t>(cfg.max_freq_mask) + 1));
  const Index f0 = static_cast<Index>(rng.uniform_int(static_cast<uint64_t>(n_mels - fw) + 1));
  const Index tw = static_cast<Index>(rng.uniform_int(static_cast<uint64_t>(cfg.max_time_mask) + 1));
  const Index t0 = static_cast<Index>(rng.uniform_int(static_cast<uint64_t>(frames - tw) + 1));

  const double fill = feats.flat().mean();
  Tensor out = feats;
  for (Index m = f0; m < f0 + fw; ++m)
    for (Index t = 0; t < frames; ++t) out(m, t) = fill;
  for (Index t = t0; t < t0 + tw; ++t)
    for (Index m = 0; m < n_mels; ++m) out(m, t) = fill;
  return out;
}

}  // namespace res2ctx
