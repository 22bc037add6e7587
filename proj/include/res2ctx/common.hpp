// res2ctx/common.hpp

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

#include <sstream>
#include <stdexcept>
#include <string>

namespace res2ctx {

// Bad arguments, malformed files, shape mismatches.  CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf surfaced by a kernel, a diverging loss, a NaN gradient.
// CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace res2ctx

#define RC_CHECK(cond, msg)                      \
  do {                                           \
    if (!(cond)) {                               \
      std::ostringstream rc_os_;                 \
      rc_os_ << msg;                             \
      throw ::res2ctx::ValidationError(rc_os_.str()); \
    }                                            \
  } while (0)

#define RC_CHECK_FINITE(cond, msg)               \
  do {                                           \
    if (!(cond)) {                               \
      std::ostringstream rc_os_;                 \
      rc_os_ << msg;                             \
      throw ::res2ctx::NumericError(rc_os_.str()); \
    }                                            \
  } while (0)
