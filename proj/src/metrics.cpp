// res2ctx/metrics.cpp

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

#include "res2ctx/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace res2ctx {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double cosine_score(const Tensor& a, const Tensor& b) {
  RC_CHECK(a.rank() == 1 && b.rank() == 1 && a.dim(0) == b.dim(0),
           "cosine_score expects equal-length vectors, got " << shape_str(a.shape()) << " and "
                                                             << shape_str(b.shape()));
  const double na = std::sqrt(a.flat().square().sum());
  const double nb = std::sqrt(b.flat().square().sum());
  RC_CHECK(na > 0.0 && nb > 0.0, "cosine_score on a zero-norm vector");
  return (a.flat() * b.flat()).sum() / (na * nb);
}

namespace {

struct CohortStats {
  double mean;
  double sigma;
  bool floored;
};

CohortStats top_k_stats(std::vector<double>& scores, int top_k) {
  RC_CHECK(top_k >= 2, "AS-norm needs K >= 2, got " << top_k);
  RC_CHECK(scores.size() >= 2, "AS-norm cohort needs at least two entries");
  const size_t k = std::min(static_cast<size_t>(top_k), scores.size());
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k), scores.end(),
                    std::greater<double>());
  double mean = 0.0;
  for (size_t i = 0; i < k; ++i) mean += scores[i];
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (size_t i = 0; i < k; ++i) var += (scores[i] - mean) * (scores[i] - mean);
  var /= static_cast<double>(k);  // population convention
  double sigma = std::sqrt(var);
  bool floored = false;
  if (sigma < 1e-12) {
    sigma = 1e-12;
    floored = true;
  }
  return {mean, sigma, floored};
}

}  // namespace

AsNormResult as_norm_scores(double raw, std::vector<double> enroll_cohort,
                            std::vector<double> test_cohort, int top_k) {
  const CohortStats e = top_k_stats(enroll_cohort, top_k);
  const CohortStats t = top_k_stats(test_cohort, top_k);
  AsNormResult out;
  out.score = 0.5 * ((raw - e.mean) / e.sigma + (raw - t.mean) / t.sigma);
  out.degenerate = e.floored || t.floored;
  return out;
}

AsNormResult as_norm(double raw, const Tensor& enroll, const Tensor& test,
                     const std::vector<Tensor>& cohort, int top_k) {
  RC_CHECK(cohort.size() >= 2, "AS-norm cohort needs at least two embeddings");
  std::vector<double> enroll_scores, test_scores;
  enroll_scores.reserve(cohort.size());
  test_scores.reserve(cohort.size());
  for (const Tensor& c : cohort) {
    enroll_scores.push_back(cosine_score(enroll, c));
    test_scores.push_back(cosine_score(test, c));
  }
  return as_norm_scores(raw, std::move(enroll_scores), std::move(test_scores), top_k);
}

// ---------------------------------------------------------------------------
// EER / minDCF / DET
// ---------------------------------------------------------------------------

namespace {

struct SweepPoint {
  double far;
  double frr;
};

void check_two_classes(const std::vector<double>& scores, const std::vector<int>& labels,
                       int64_t* n_target, int64_t* n_nontarget) {
  RC_CHECK(scores.size() == labels.size(), "scores and labels differ in length");
  RC_CHECK(!scores.empty(), "no trials");
  int64_t tar = 0, non = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    RC_CHECK(labels[i] == 0 || labels[i] == 1, "labels must be 0 or 1, got " << labels[i]);
    RC_CHECK(std::isfinite(scores[i]), "non-finite score at index " << i);
    (labels[i] == 1 ? tar : non) += 1;
  }
  RC_CHECK(tar >= 1 && non >= 1, "metrics need at least one target and one nontarget trial");
  *n_target = tar;
  *n_nontarget = non;
}

// Operating points at the sorted unique scores (accept iff score >= t),
// plus a final reject-all point.  FAR is non-increasing, FRR non-decreasing.
std::vector<SweepPoint> sweep_points(const std::vector<double>& scores,
                                     const std::vector<int>& labels, int64_t n_tar,
                                     int64_t n_non, std::vector<double>* uniques_out) {
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  std::vector<SweepPoint> points;
  std::vector<double> uniques;
  int64_t tar_below = 0, non_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double value = scores[order[i]];
    uniques.push_back(value);
    // Counts strictly below `value`.
    points.push_back({static_cast<double>(n_non - non_below) / static_cast<double>(n_non),
                      static_cast<double>(tar_below) / static_cast<double>(n_tar)});
    while (i < order.size() && scores[order[i]] == value) {
      (labels[order[i]] == 1 ? tar_below : non_below) += 1;
      ++i;
    }
  }
  points.push_back({0.0, 1.0});  // reject everything
  if (uniques_out) *uniques_out = std::move(uniques);
  return points;
}

double eer_from_points(const std::vector<SweepPoint>& points) {
  // diff = FAR - FRR is non-increasing, starting at 1 - 0 and ending at
  // 0 - 1: find the sign change and interpolate both rates at the crossing.
  for (size_t k = 1; k < points.size(); ++k) {
    const double d1 = points[k].far - points[k].frr;
    if (d1 > 0.0) continue;
    if (d1 == 0.0) return 0.5 * (points[k].far + points[k].frr);
    const double d0 = points[k - 1].far - points[k - 1].frr;
    const double alpha = d0 / (d0 - d1);
    return points[k - 1].frr + alpha * (points[k].frr - points[k - 1].frr);
  }
  return 0.5 * (points.back().far + points.back().frr);
}

}  // namespace

double eer(const std::vector<double>& scores, const std::vector<int>& labels) {
  int64_t n_tar = 0, n_non = 0;
  check_two_classes(scores, labels, &n_tar, &n_non);
  return eer_from_points(sweep_points(scores, labels, n_tar, n_non, nullptr));
}

double min_dcf(const std::vector<double>& scores, const std::vector<int>& labels,
               const DcfParams& params) {
  RC_CHECK(params.p_target > 0.0 && params.p_target < 1.0, "P_target must lie in (0, 1)");
  RC_CHECK(params.c_fa > 0.0 && params.c_miss > 0.0, "detection costs must be positive");
  int64_t n_tar = 0, n_non = 0;
  check_two_classes(scores, labels, &n_tar, &n_non);

  std::vector<double> uniques;
  // points[k] is the operating point for thresholds in (uniques[k-1], uniques[k]];
  // the midpoint threshold between uniques[k-1] and uniques[k] lands there.
  const std::vector<SweepPoint> points = sweep_points(scores, labels, n_tar, n_non, &uniques);

  const double norm = std::min(params.c_miss * params.p_target,
                               params.c_fa * (1.0 - params.p_target));
  double best = std::numeric_limits<double>::infinity();
  // Thresholds: -inf (accept all), midpoints, +inf (reject all).
  // -inf gives the same counts as the lowest unique score; list it explicitly.
  auto cost_at = [&](double p_fa, double p_miss) {
    return params.c_miss * params.p_target * p_miss + params.c_fa * (1.0 - params.p_target) * p_fa;
  };
  best = std::min(best, cost_at(1.0, 0.0));  // -inf threshold
  for (size_t k = 1; k < uniques.size(); ++k) {
    // midpoint between uniques[k-1] and uniques[k] accepts scores >= uniques[k]
    best = std::min(best, cost_at(points[k].far, points[k].frr));
  }
  best = std::min(best, cost_at(0.0, 1.0));  // +inf threshold
  return best / norm;
}

std::vector<DetRow> det_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  int64_t n_tar = 0, n_non = 0;
  check_two_classes(scores, labels, &n_tar, &n_non);
  std::vector<double> uniques;
  const std::vector<SweepPoint> points = sweep_points(scores, labels, n_tar, n_non, &uniques);
  std::vector<DetRow> rows;
  rows.reserve(uniques.size() + 2);
  rows.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  for (size_t k = 0; k < uniques.size(); ++k)
    rows.push_back({uniques[k], points[k].far, points[k].frr});
  rows.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return rows;
}

void write_det_tsv(const std::string& path, const std::vector<DetRow>& rows) {
  std::ofstream out(path);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  out << "threshold\tfar\tfrr\n";
  for (const DetRow& r : rows) {
    out << format_double(r.threshold) << "\t" << format_double(r.far) << "\t"
        << format_double(r.frr) << "\n";
  }
  RC_CHECK(out.good(), "failed writing '" << path << "'");
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::vector<Trial> read_trials(const std::string& path) {
  std::ifstream in(path);
  RC_CHECK(in.good(), "cannot open trial list '" << path << "'");
  std::vector<Trial> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Trial t;
    std::string label;
    ls >> t.enroll >> t.test >> label;
    RC_CHECK(!ls.fail() && (label == "0" || label == "1"),
             path << ":" << lineno << ": expected 'enroll_id test_id label(0|1)', got '" << line
                  << "'");
    t.label = label == "1" ? 1 : 0;
    out.push_back(std::move(t));
  }
  return out;
}

void write_trials(const std::string& path, const std::vector<Trial>& trials) {
  std::ofstream out(path);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  for (const Trial& t : trials) out << t.enroll << " " << t.test << " " << t.label << "\n";
  RC_CHECK(out.good(), "failed writing '" << path << "'");
}

std::vector<ScoreRecord> read_scores(const std::string& path) {
  std::ifstream in(path);
  RC_CHECK(in.good(), "cannot open score file '" << path << "'");
  std::vector<ScoreRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ScoreRecord r;
    std::string score;
    ls >> r.enroll >> r.test >> score;
    RC_CHECK(!ls.fail(), path << ":" << lineno << ": expected 'enroll<TAB>test<TAB>score', got '"
                              << line << "'");
    try {
      r.score = std::stod(score);
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": bad score '" + score + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_scores(const std::string& path, const std::vector<ScoreRecord>& records) {
  std::ofstream out(path);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  for (const ScoreRecord& r : records)
    out << r.enroll << "\t" << r.test << "\t" << format_double(r.score) << "\n";
  RC_CHECK(out.good(), "failed writing '" << path << "'");
}

void write_embedding_table(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  RC_CHECK(out.good(), "cannot open '" << path << "' for writing");
  for (const auto& [id, emb] : table) {
    out << id;
    for (Index i = 0; i < emb.size(); ++i) out << "\t" << format_double(emb.at(i));
    out << "\n";
  }
  RC_CHECK(out.good(), "failed writing '" << path << "'");
}

EmbeddingTable read_embedding_table(const std::string& path) {
  std::ifstream in(path);
  RC_CHECK(in.good(), "cannot open embedding table '" << path << "'");
  EmbeddingTable out;
  std::string line;
  int lineno = 0;
  Index dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id;
    ls >> id;
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    RC_CHECK(!vals.empty(), path << ":" << lineno << ": no embedding values for '" << id << "'");
    if (dim < 0) dim = static_cast<Index>(vals.size());
    RC_CHECK(static_cast<Index>(vals.size()) == dim,
             path << ":" << lineno << ": embedding length " << vals.size()
                  << " differs from the table's " << dim);
    out.emplace_back(id, Tensor::vector(std::move(vals)));
  }
  return out;
}

std::pair<std::vector<double>, std::vector<int>> join_trials_scores(
    const std::vector<Trial>& trials, const std::vector<ScoreRecord>& records) {
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const ScoreRecord& r : records) lookup[{r.enroll, r.test}] = r.score;
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(trials.size());
  labels.reserve(trials.size());
  for (const Trial& t : trials) {
    auto it = lookup.find({t.enroll, t.test});
    RC_CHECK(it != lookup.end(),
             "no score for trial pair (" << t.enroll << ", " << t.test << ")");
    scores.push_back(it->second);
    labels.push_back(t.label);
  }
  return {std::move(scores), std::move(labels)};
}

}  // namespace res2ctx
