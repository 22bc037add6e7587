// res2ctx/training.cpp

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

#include "res2ctx/training.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

namespace res2ctx {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void parallel_for(int workers, int n, const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  const int active = std::min(workers, n);
  for (int w = 0; w < active; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

Var aam_softmax_loss(Var embeddings, const std::vector<int>& labels, Var class_weights,
                     const AamConfig& cfg) {
  RC_CHECK(embeddings.valid() && class_weights.valid() &&
               embeddings.graph() == class_weights.graph(),
           "aam loss operands must share a graph");
  Graph& g = *embeddings.graph();
  const Tensor& ev = g.value(embeddings);
  const Tensor& wv = g.value(class_weights);
  RC_CHECK(ev.rank() == 2 && wv.rank() == 2 && ev.dim(1) == wv.dim(1),
           "aam loss: embeddings " << shape_str(ev.shape()) << " vs class weights "
                                   << shape_str(wv.shape()));
  RC_CHECK(cfg.margin >= 0.0 && cfg.margin < 1.5707963267948966,
           "aam margin must lie in [0, pi/2)");
  RC_CHECK(cfg.scale > 0.0, "aam scale must be positive");
  const Index batch = ev.dim(0);
  const Index dim = ev.dim(1);
  const Index classes = wv.dim(0);
  RC_CHECK(static_cast<Index>(labels.size()) == batch, "aam loss: label count mismatch");
  for (int y : labels)
    RC_CHECK(y >= 0 && y < classes, "label " << y << " out of range [0, " << classes << ")");
  for (Index r = 0; r < batch; ++r)
    RC_CHECK_FINITE(ev.mat().row(r).norm() > 1e-12, "zero-norm embedding in row " << r);
  for (Index r = 0; r < classes; ++r)
    RC_CHECK_FINITE(wv.mat().row(r).norm() > 1e-12, "zero-norm class weight in row " << r);

  Var emb_inv = rsqrt(clamp_min(sum_time(square(embeddings)), 1e-24));
  Var emb_hat = mul(embeddings, broadcast_time(emb_inv, dim));
  Var w_inv = rsqrt(clamp_min(sum_time(square(class_weights)), 1e-24));
  Var w_hat = mul(class_weights, broadcast_time(w_inv, dim));
  Var cosine = matmul(emb_hat, transpose(w_hat));  // B x K

  Var logits = cosine;
  if (cfg.margin > 0.0) {
    Var sine = sqrt(clamp_min(add_scalar(neg(square(cosine)), 1.0), 0.0));
    Var shifted = sub(scale(cosine, std::cos(cfg.margin)), scale(sine, std::sin(cfg.margin)));
    Tensor mask_t = Tensor::zeros({batch, classes});
    for (Index r = 0; r < batch; ++r) mask_t(r, labels[static_cast<size_t>(r)]) = 1.0;
    Var mask = g.constant(std::move(mask_t));
    logits = add(cosine, mul(mask, sub(shifted, cosine)));
  }
  return cross_entropy_logits(scale(logits, cfg.scale), labels);
}

double cyclical_lr(int64_t step, const LrSchedule& sched) {
  RC_CHECK(step >= 0, "schedule step must be non-negative");
  RC_CHECK(sched.step_size >= 1, "schedule step_size must be positive");
  RC_CHECK(sched.base < sched.max, "schedule base rate must be below the max");
  const double t = static_cast<double>(step);
  const double size = static_cast<double>(sched.step_size);
  const double cycle = std::floor(1.0 + t / (2.0 * size));
  const double x = std::abs(t / size - 2.0 * cycle + 1.0);
  return sched.base +
         (sched.max - sched.base) * std::max(0.0, 1.0 - x) / std::pow(2.0, cycle - 1.0);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  moment1_.reserve(params_.size());
  moment2_.reserve(params_.size());
  for (Parameter* p : params_) {
    moment1_.push_back(Tensor::zeros(p->value.shape()));
    moment2_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    p->ensure_grad();
    RC_CHECK_FINITE(p->grad.all_finite(),
                    "non-finite gradient for parameter '" << p->name << "'; step aborted");
    Eigen::ArrayXd g = p->grad.flat() + cfg_.weight_decay * p->value.flat();
    moment1_[i].flat() = cfg_.beta1 * moment1_[i].flat() + (1.0 - cfg_.beta1) * g;
    moment2_[i].flat() = cfg_.beta2 * moment2_[i].flat() + (1.0 - cfg_.beta2) * g.square();
    const Eigen::ArrayXd m_hat = moment1_[i].flat() / bc1;
    const Eigen::ArrayXd v_hat = moment2_[i].flat() / bc2;
    p->value.flat() -= lr * m_hat / (v_hat.sqrt() + cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

TrainResult train_loop(Model& model, const std::vector<Utterance>& corpus,
                       const TrainConfig& cfg) {
  RC_CHECK(!corpus.empty(), "training corpus is empty");
  RC_CHECK(cfg.batch >= 1 && cfg.steps >= 1, "batch and steps must be positive");
  int max_speaker = 0, min_speaker = corpus[0].speaker;
  for (const auto& u : corpus) {
    max_speaker = std::max(max_speaker, u.speaker);
    min_speaker = std::min(min_speaker, u.speaker);
  }
  RC_CHECK(min_speaker >= 0, "speaker labels must be non-negative");
  RC_CHECK(max_speaker >= 1, "training needs at least two speakers");
  RC_CHECK(model.config().num_classes > max_speaker,
           "model classifier covers " << model.config().num_classes << " classes, corpus has "
                                      << max_speaker + 1 << " speakers");
  Parameter* classifier = model.classifier();
  RC_CHECK(classifier != nullptr, "model was built without a classifier head");

  std::vector<Parameter*> params;
  for (const auto& p : model.store().params()) params.push_back(p.get());
  Adam opt(params, cfg.adam);

  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    metrics.open(cfg.out_dir + "/metrics.tsv");
    RC_CHECK(metrics.good(), "cannot open metrics log in '" << cfg.out_dir << "'");
    metrics << "step\tlr\tloss\n";
  }

  TrainResult result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    const double lr = cyclical_lr(step, cfg.sched);

    Rng batch_rng(Rng::mix(cfg.seed, 0xba7c4u, static_cast<uint64_t>(step)));
    std::vector<int> picks(static_cast<size_t>(cfg.batch));
    for (int s = 0; s < cfg.batch; ++s)
      picks[static_cast<size_t>(s)] = static_cast<int>(batch_rng.uniform_int(corpus.size()));

    // Feature pipeline; each slot is pure given its (seed, step, slot) rng.
    std::vector<Tensor> feats(static_cast<size_t>(cfg.batch));
    std::vector<int> labels(static_cast<size_t>(cfg.batch));
    std::string pipeline_error;
    std::mutex error_mu;
    parallel_for(cfg.threads, cfg.batch, [&](int s) {
      try {
        const Utterance& utt = corpus[static_cast<size_t>(picks[static_cast<size_t>(s)])];
        Rng rng(Rng::mix(cfg.seed, static_cast<uint64_t>(step),
                         static_cast<uint64_t>(s) + 0x17e0u));
        Waveform wav = crop_2s(utt.wav, rng);
        if (cfg.augment_enabled) wav = augment_noise_reverb(wav, cfg.augment, rng);
        Tensor f = logmel(wav, cfg.mel);
        if (cfg.specaug_enabled) f = specaugment(f, cfg.specaug, rng);
        feats[static_cast<size_t>(s)] = std::move(f);
        labels[static_cast<size_t>(s)] = utt.speaker;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        pipeline_error = e.what();
      }
    });
    if (!pipeline_error.empty()) throw ValidationError(pipeline_error);

    double loss = 0.0;
    try {
      Graph g;
      Binder b(g);
      std::vector<Var> inputs;
      inputs.reserve(feats.size());
      for (Tensor& f : feats) inputs.push_back(g.constant(std::move(f)));
      auto embeddings = model.embed_batch(b, inputs, Mode::kTrain);
      Var emb_matrix = stack_rows(embeddings);
      Var loss_var = aam_softmax_loss(emb_matrix, labels, b(classifier), cfg.aam);
      loss = g.value(loss_var).at(0);
      opt.zero_grad();
      g.backward(loss_var);
      opt.step(lr);
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = e.what();
      break;
    }

    result.losses.push_back(loss);
    result.lrs.push_back(lr);
    if (metrics.is_open())
      metrics << step << "\t" << fmt_double(lr) << "\t" << fmt_double(loss) << "\n";

    if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      result.checkpoint_path = cfg.out_dir + "/checkpoint.ckpt";
      save_checkpoint(model, result.checkpoint_path);
    }
  }
  if (!result.aborted && !cfg.out_dir.empty()) {
    result.checkpoint_path = cfg.out_dir + "/checkpoint.ckpt";
    save_checkpoint(model, result.checkpoint_path);
  }
  return result;
}

}  // namespace res2ctx
