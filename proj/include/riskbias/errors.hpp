// Copyright 2026 The riskbias Authors
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

namespace riskbias {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map categories to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an API contract (empty input, wrong lengths, bad flag).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes do not chain.
class DimensionError : public UsageError {
 public:
  using UsageError::UsageError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Loss or gradient became non-finite while optimizing.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint, dataset or config.
class FormatError : public Error {
 public:
  using Error::Error;
};

class MismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Config parse failure; the message carries the key path and line number.
class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

// find_degenerate_bias could not reach the target from any start.
class SearchFailure : public Error {
 public:
  SearchFailure(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

}  // namespace riskbias
