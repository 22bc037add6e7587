// res2ctx/audio.cpp

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

#include "res2ctx/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace res2ctx {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  RC_CHECK(in.good(), "cannot open wav file '" << path << "'");
  char tag[5] = {0};
  in.read(tag, 4);
  RC_CHECK(in.good() && std::strncmp(tag, "RIFF", 4) == 0, "'" << path << "': not a RIFF file");
  (void)read_u32(in);  // riff size
  in.read(tag, 4);
  RC_CHECK(in.good() && std::strncmp(tag, "WAVE", 4) == 0, "'" << path << "': not a WAVE file");

  Waveform w;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const uint32_t chunk = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      const uint16_t format = read_u16(in);
      const uint16_t channels = read_u16(in);
      const uint32_t rate = read_u32(in);
      (void)read_u32(in);  // byte rate
      (void)read_u16(in);  // block align
      const uint16_t bits = read_u16(in);
      RC_CHECK(format == 1, "'" << path << "': only PCM wav is supported (format " << format
                                << ")");
      RC_CHECK(channels == 1, "'" << path << "': only mono wav is supported (" << channels
                                  << " channels)");
      RC_CHECK(bits == 16, "'" << path << "': only 16-bit wav is supported (" << bits << " bits)");
      w.sample_rate = static_cast<int>(rate);
      if (chunk > 16) in.seekg(chunk - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      RC_CHECK(have_fmt, "'" << path << "': data chunk before fmt chunk");
      const size_t n = chunk / 2;
      std::vector<int16_t> raw(n);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(chunk));
      RC_CHECK(in.good(), "'" << path << "': truncated data chunk");
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) w.samples[i] = raw[i] / 32768.0;
      return w;
    } else {
      in.seekg(chunk + (chunk & 1), std::ios::cur);
    }
  }
  throw ValidationError("'" + path + "': no data chunk found");
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(w.sample_rate));
  write_u32(out, static_cast<uint32_t>(w.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : w.samples) {
    double v = s * 32768.0;
    if (v > 32767.0) v = 32767.0;
    if (v < -32768.0) v = -32768.0;
    const int16_t q = static_cast<int16_t>(std::lrint(v));
    out.write(reinterpret_cast<const char*>(&q), 2);
  }
  RC_CHECK(out.good(), "failed writing wav '" << path << "'");
}

Waveform crop_2s(const Waveform& w, Rng& rng) {
  RC_CHECK(!w.samples.empty(), "crop of an empty waveform");
  const size_t target = static_cast<size_t>(2 * w.sample_rate);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(target);
  if (w.samples.size() >= target) {
    const size_t offset = rng.uniform_int(w.samples.size() - target + 1);
    std::copy(w.samples.begin() + static_cast<std::ptrdiff_t>(offset),
              w.samples.begin() + static_cast<std::ptrdiff_t>(offset + target),
              out.samples.begin());
  } else {
    for (size_t i = 0; i < target; ++i) out.samples[i] = w.samples[i % w.samples.size()];
  }
  return out;
}

Waveform augment_noise_reverb(const Waveform& w, const NoiseReverbConfig& cfg, Rng& rng) {
  RC_CHECK(cfg.snr_min_db <= cfg.snr_max_db, "invalid SNR range");
  Waveform out = w;

  const bool add_noise = rng.uniform() < cfg.noise_prob;
  const double snr_db = rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
  if (add_noise && std::isfinite(snr_db)) {
    const size_t n = out.samples.size();
    std::vector<double> noise(n);
    double noise_power = 0.0, signal_power = 0.0;
    for (size_t i = 0; i < n; ++i) {
      noise[i] = rng.gaussian();
      noise_power += noise[i] * noise[i];
      signal_power += out.samples[i] * out.samples[i];
    }
    noise_power /= static_cast<double>(n);
    signal_power /= static_cast<double>(n);
    if (signal_power > 0.0 && noise_power > 0.0) {
      // Scale so the realized SNR equals the sampled target exactly.
      const double target_power = signal_power / std::pow(10.0, snr_db / 10.0);
      const double gain = std::sqrt(target_power / noise_power);
      for (size_t i = 0; i < n; ++i) out.samples[i] += gain * noise[i];
    }
  }

  const bool add_reverb = rng.uniform() < cfg.reverb_prob;
  if (add_reverb && cfg.reverb_tail_s > 0.0) {
    // Sparse impulse response: a direct tap plus a handful of echoes whose
    // gains decay exponentially across the tail.
    const int tail = static_cast<int>(cfg.reverb_tail_s * out.sample_rate);
    const int echoes = 8;
    std::vector<std::pair<int, double>> taps;
    taps.emplace_back(0, 1.0);
    for (int e = 0; e < echoes; ++e) {
      const int delay = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(tail)));
      const double decay = std::exp(-3.0 * delay / std::max(tail, 1));
      const double gain = 0.4 * decay * (rng.uniform() < 0.5 ? 1.0 : -1.0) * rng.uniform(0.5, 1.0);
      taps.emplace_back(delay, gain);
    }
    const std::vector<double> dry = out.samples;
    for (size_t i = 0; i < dry.size(); ++i) {
      double acc = 0.0;
      for (const auto& [delay, gain] : taps) {
        if (static_cast<size_t>(delay) <= i) acc += gain * dry[i - static_cast<size_t>(delay)];
      }
      out.samples[i] = acc;
    }
  }

  double peak = 0.0;
  for (double s : out.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    for (double& s : out.samples) s /= peak;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

struct SpeakerProfile {
  double f0;
  double formant1, formant2;
  double bw1, bw2;
  double tilt;
};

SpeakerProfile speaker_profile(const SynthConfig& cfg, uint64_t seed, int speaker) {
  Rng rng(Rng::mix(seed, 0x5eedu, static_cast<uint64_t>(speaker)));
  SpeakerProfile p;
  // Fundamentals spread evenly across 95..250 Hz with a small random offset,
  // so any two speakers stay clearly apart.
  const double span = 155.0;
  p.f0 = 95.0 + span * speaker / std::max(cfg.num_speakers, 2) + rng.uniform(-2.0, 2.0);
  p.formant1 = rng.uniform(350.0, 850.0);
  p.formant2 = rng.uniform(1200.0, 2500.0);
  p.bw1 = rng.uniform(80.0, 140.0);
  p.bw2 = rng.uniform(120.0, 220.0);
  p.tilt = rng.uniform(0.2, 0.5);
  return p;
}

}  // namespace

Waveform synth_utterance(const SynthConfig& cfg, uint64_t seed, int speaker, int utt) {
  const SpeakerProfile prof = speaker_profile(cfg, seed, speaker);
  Rng rng(Rng::mix(seed, static_cast<uint64_t>(speaker), static_cast<uint64_t>(utt)));

  const double dur = rng.uniform(cfg.min_dur_s, cfg.max_dur_s);
  const int n = static_cast<int>(dur * cfg.sample_rate);
  const double f0 = prof.f0 * (1.0 + rng.uniform(-0.03, 0.03));
  const double vib_rate = rng.uniform(4.0, 6.5);
  const double vib_depth = rng.uniform(0.006, 0.012);
  const double attack = rng.uniform(0.05, 0.2);
  const double release = rng.uniform(0.1, 0.3);
  const double am_rate = rng.uniform(0.5, 1.5);
  const double am_depth = rng.uniform(0.05, 0.15);
  const double f1 = prof.formant1 * (1.0 + rng.uniform(-0.05, 0.05));
  const double f2 = prof.formant2 * (1.0 + rng.uniform(-0.05, 0.05));

  const int harmonics = std::min(static_cast<int>(4000.0 / f0), 24);
  std::vector<double> amp(static_cast<size_t>(harmonics));
  std::vector<double> phase(static_cast<size_t>(harmonics));
  for (int k = 0; k < harmonics; ++k) {
    const double freq = (k + 1) * f0;
    const double g1 = std::exp(-0.5 * std::pow((freq - f1) / prof.bw1, 2.0));
    const double g2 = 0.8 * std::exp(-0.5 * std::pow((freq - f2) / prof.bw2, 2.0));
    amp[static_cast<size_t>(k)] = (g1 + g2 + 0.05) / std::pow(k + 1.0, prof.tilt);
    phase[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * kPi);
  }

  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(static_cast<size_t>(n));
  const double dt = 1.0 / cfg.sample_rate;
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    const double inst_f0 = f0 * (1.0 + vib_depth * std::sin(2.0 * kPi * vib_rate * t));
    double env = 1.0;
    if (t < attack) env = t / attack;
    const double remain = dur - t;
    if (remain < release) env = std::min(env, remain / release);
    env *= 1.0 - am_depth * (0.5 + 0.5 * std::sin(2.0 * kPi * am_rate * t));
    double acc = 0.0;
    for (int k = 0; k < harmonics; ++k) {
      phase[static_cast<size_t>(k)] += 2.0 * kPi * (k + 1) * inst_f0 * dt;
      acc += amp[static_cast<size_t>(k)] * std::sin(phase[static_cast<size_t>(k)]);
    }
    const double v = env * acc + 0.002 * rng.gaussian();
    w.samples[static_cast<size_t>(i)] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.0) {
    const double gain = 0.5 / peak;
    for (double& s : w.samples) s *= gain;
  }
  return w;
}

std::vector<Utterance> synth_corpus(const SynthConfig& cfg, uint64_t seed) {
  RC_CHECK(cfg.num_speakers >= 2, "a corpus needs at least two speakers");
  RC_CHECK(cfg.utts_per_speaker >= 1, "utts_per_speaker must be positive");
  std::vector<Utterance> out;
  out.reserve(static_cast<size_t>(cfg.num_speakers * cfg.utts_per_speaker));
  char buf[64];
  for (int s = 0; s < cfg.num_speakers; ++s) {
    for (int u = 0; u < cfg.utts_per_speaker; ++u) {
      Utterance item;
      std::snprintf(buf, sizeof(buf), "spk%03d_utt%03d", s, u);
      item.id = buf;
      item.speaker = s;
      item.wav = synth_utterance(cfg, seed, s, u);
      out.push_back(std::move(item));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest io
// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  RC_CHECK(in.good(), "cannot open manifest '" << path << "'");
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    RC_CHECK(tab != std::string::npos && tab > 0 && tab + 1 < line.size(),
             path << ":" << lineno << ": expected 'path<TAB>speaker_id', got '" << line << "'");
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  for (const auto& e : entries) out << e.path << "\t" << e.speaker << "\n";
  RC_CHECK(out.good(), "failed writing manifest '" << path << "'");
}

std::string utterance_id(const std::string& path) {
  const size_t slash = path.find_last_of("/\\");
  std::string stem = slash == std::string::npos ? path : path.substr(slash + 1);
  const size_t dot = stem.find_last_of('.');
  return dot == std::string::npos ? stem : stem.substr(0, dot);
}

}  // namespace res2ctx
