// Copyright 2026 The foleygen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FOLEYGEN_ERRORS_HPP_
#define FOLEYGEN_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace foleygen {

// All library errors derive from Error and carry a short category tag that
// the CLI prints as `error[<category>]: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& m) : Error("parse", m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error("validation", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& m) : Error("input", m) {}
};

class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& m) : Error("decode", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& m) : Error("numerical", m) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& m) : Error("training", m) {}
};

class CheckpointError : public Error {
 public:
  CheckpointError(std::string category, const std::string& m)
      : Error(std::move(category), m) {}
};

class CheckpointVersionError : public CheckpointError {
 public:
  explicit CheckpointVersionError(const std::string& m)
      : CheckpointError("checkpoint-version", m) {}
};

class CheckpointFingerprintError : public CheckpointError {
 public:
  explicit CheckpointFingerprintError(const std::string& m)
      : CheckpointError("checkpoint-fingerprint", m) {}
};

class CheckpointTruncationError : public CheckpointError {
 public:
  explicit CheckpointTruncationError(const std::string& m)
      : CheckpointError("checkpoint-truncation", m) {}
};

}  // namespace foleygen

#endif  // FOLEYGEN_ERRORS_HPP_
