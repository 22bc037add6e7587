// res2ctx/gradcheck.hpp

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

#include <functional>
#include <string>
#include <vector>

#include "res2ctx/graph.hpp"

namespace res2ctx {

// Builds a scalar forward pass from leaf vars created by the checker.
// The builder must not keep state between invocations: it is re-run for
// every finite-difference probe.
using ScalarBuildFn = std::function<Var(Graph&, const std::vector<Var>&)>;

// Central-difference check of reverse-mode gradients.  The numeric side only
// ever evaluates forward passes, so it is independent of every backward rule
// it audits.  Returns max over all leaf coordinates of
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
double fd_max_rel_err(const ScalarBuildFn& build, std::vector<Tensor> leaves, double h = 1e-5);

// Same check for parameterized modules: `build` rebinds the given parameters
// (through a Binder) on every invocation, and their values are wiggled in
// place.  When `sample_limit` > 0, only that many randomly chosen coordinates
// per parameter are probed (for end-to-end model checks).
double fd_max_rel_err_params(const std::function<Var(Graph&)>& build,
                             const std::vector<Parameter*>& params, double h = 1e-5,
                             Index sample_limit = 0, uint64_t sample_seed = 0);

struct CheckRow {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// The registered finite-difference suites: every primitive op, every layer,
// every block variant, and an end-to-end toy model with loss.  Deterministic
// under `seed`.
std::vector<CheckRow> run_gradcheck_suites(uint64_t seed);

// Tolerances pinned by the verification plan.
inline constexpr double kOpGradTol = 1e-6;
inline constexpr double kLayerGradTol = 1e-5;
inline constexpr double kBlockGradTol = 1e-4;
inline constexpr double kModelGradTol = 1e-3;

}  // namespace res2ctx
