// Copyright (c) 2026 The calfuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace calfuse {

/// Input rejected before any computation: bad shapes, malformed files,
/// out-of-range arguments. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure during computation (non-finite values, I/O on write).
/// The CLI maps this to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch; the message names the offending dimension.
class DimensionError : public ValidationError {
 public:
  DimensionError(const std::string& what, long expected, long actual)
      : ValidationError(what + ": expected " + std::to_string(expected) +
                        ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  long expected() const { return expected_; }
  long actual() const { return actual_; }

 private:
  long expected_;
  long actual_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

inline void require_dim(const char* what, long expected, long actual) {
  if (expected != actual) throw DimensionError(what, expected, actual);
}

}  // namespace calfuse
