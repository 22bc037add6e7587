// res2ctx/metrics.hpp

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
#include <utility>
#include <vector>

#include "res2ctx/tensor.hpp"

namespace res2ctx {

// Cosine similarity of two embeddings; zero-norm vectors are rejected.
double cosine_score(const Tensor& a, const Tensor& b);

struct AsNormResult {
  double score = 0.0;
  bool degenerate = false;  // a sigma floor kicked in (all-equal cohort scores)
};

// Adaptive score normalization from precomputed cohort score lists: z-norm
// against the top-K statistics of each side, averaged.  Population sigma
// with a 1e-12 floor; K is capped at the cohort size.
AsNormResult as_norm_scores(double raw, std::vector<double> enroll_cohort,
                            std::vector<double> test_cohort, int top_k);

// Convenience wrapper computing the cohort cosine scores internally.
AsNormResult as_norm(double raw, const Tensor& enroll, const Tensor& test,
                     const std::vector<Tensor>& cohort, int top_k);

// Equal error rate: threshold sweep over the sorted unique scores with the
// acceptance rule score >= threshold, linearly interpolated at the FAR=FRR
// crossing.  Labels are 1 (target) / 0 (nontarget); both classes required.
double eer(const std::vector<double>& scores, const std::vector<int>& labels);

struct DcfParams {
  double p_target = 0.01;
  double c_fa = 1.0;
  double c_miss = 1.0;
};

// Minimum normalized detection cost over thresholds placed at midpoints
// between consecutive sorted unique scores plus the two infinities.
double min_dcf(const std::vector<double>& scores, const std::vector<int>& labels,
               const DcfParams& params);

struct DetRow {
  double threshold;
  double far;
  double frr;
};

// Operating points at -inf, every unique score, +inf: FAR non-increasing,
// FRR non-decreasing in the threshold.
std::vector<DetRow> det_curve(const std::vector<double>& scores, const std::vector<int>& labels);
void write_det_tsv(const std::string& path, const std::vector<DetRow>& rows);

// ---------------------------------------------------------------------------
// Trial / score / embedding-table files
// ---------------------------------------------------------------------------

struct Trial {
  std::string enroll;
  std::string test;
  int label = 0;  // 1 target, 0 nontarget
};

// One "enroll_id test_id label" line per trial.
std::vector<Trial> read_trials(const std::string& path);
void write_trials(const std::string& path, const std::vector<Trial>& trials);

struct ScoreRecord {
  std::string enroll;
  std::string test;
  double score = 0.0;
};

// TSV: enroll_id <TAB> test_id <TAB> score.
std::vector<ScoreRecord> read_scores(const std::string& path);
void write_scores(const std::string& path, const std::vector<ScoreRecord>& records);

// TSV: id then the embedding values.
using EmbeddingTable = std::vector<std::pair<std::string, Tensor>>;
void write_embedding_table(const std::string& path, const EmbeddingTable& table);
EmbeddingTable read_embedding_table(const std::string& path);

// Joins trials with a score file (keyed on the id pair) into parallel
// score/label arrays; missing pairs are errors.
std::pair<std::vector<double>, std::vector<int>> join_trials_scores(
    const std::vector<Trial>& trials, const std::vector<ScoreRecord>& records);

// Shortest round-trip decimal formatting, stable across runs.
std::string format_double(double v);

}  // namespace res2ctx
