// res2ctx/training.hpp

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

#include "res2ctx/audio.hpp"
#include "res2ctx/features.hpp"
#include "res2ctx/model.hpp"

namespace res2ctx {

struct AamConfig {
  double margin = 0.2;  // additive angle, radians
  double scale = 30.0;
};

// Additive-angular-margin softmax over cosine logits.  Embeddings (B x D) and
// class weights (K x D) are L2-normalized row-wise; the true-class cosine is
// replaced by cos(theta + m) = cos*cos(m) - sin*sin(m) with
// sin = sqrt(max(1 - cos^2, 0)), logits are scaled by `scale`, and the result
// is the batch-mean cross entropy.  Zero-norm rows are rejected.
Var aam_softmax_loss(Var embeddings, const std::vector<int>& labels, Var class_weights,
                     const AamConfig& cfg);

struct LrSchedule {
  double base = 1e-8;
  double max = 1e-3;
  int64_t step_size = 65000;  // iterations per half cycle
};

// Cyclical learning rate, triangular2 policy: triangular ramp between base
// and max whose amplitude halves each full cycle.
double cyclical_lr(int64_t step, const LrSchedule& sched);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 2e-5;  // coupled L2, added to the gradient
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);
  // Applies one update from the accumulated gradients.  A non-finite
  // gradient aborts with a diagnostic naming the parameter.
  void step(double lr);
  void zero_grad();
  int64_t steps_done() const { return steps_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> moment1_, moment2_;
  AdamConfig cfg_;
  int64_t steps_ = 0;
};

struct TrainConfig {
  int batch = 128;
  int64_t steps = 1000;
  uint64_t seed = 1;
  LrSchedule sched;
  AamConfig aam;
  AdamConfig adam;
  MelConfig mel;
  bool augment_enabled = true;
  NoiseReverbConfig augment;
  bool specaug_enabled = true;
  SpecAugmentConfig specaug;
  int64_t checkpoint_interval = 500;
  std::string out_dir;  // metrics log + checkpoints; empty keeps everything in memory
  int threads = 1;      // feature-pipeline workers; results are worker-count independent
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<double> lrs;
  std::string checkpoint_path;  // last good checkpoint ("" if none written)
  bool aborted = false;
  std::string abort_reason;
};

// One training step per iteration: sample batch -> crop -> noise/reverb ->
// logmel -> specaugment -> embed(train) -> AAM loss -> Adam at the cyclical
// rate.  Fully deterministic under cfg.seed; per-item seeds derive from
// (seed, step, slot) so the worker count cannot change results.  A non-finite
// loss or gradient aborts, retaining the last scheduled checkpoint.
TrainResult train_loop(Model& model, const std::vector<Utterance>& corpus, const TrainConfig& cfg);

}  // namespace res2ctx
