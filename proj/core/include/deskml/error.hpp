// Copyright 2026 The deskml Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace deskml {

enum class ErrorCode {
  InvalidArgument,
  NotFound,
  PermissionDenied,
  Unauthenticated,
  StateError,
  Conflict,
  Rejected,
  Unavailable,
  Persistence,
  Corrupt,
  Invariant,
};

const char* to_string(ErrorCode c);

/// The one exception type the control plane throws. `code` drives HTTP status
/// mapping in the gateway and exit codes in the CLI.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Admission refusal. `reason` is one of CreditExhausted, Infeasible, PermissionDenied.
class AdmissionRejected : public Error {
 public:
  explicit AdmissionRejected(std::string reason)
      : Error(reason == "PermissionDenied" ? ErrorCode::PermissionDenied : ErrorCode::Rejected,
              "admission rejected: " + reason),
        reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

/// Replay hit a record it could not decode. `position` is the 1-based line.
class CorruptRecord : public Error {
 public:
  CorruptRecord(std::size_t position, const std::string& detail)
      : Error(ErrorCode::Corrupt,
              "corrupt log record at line " + std::to_string(position) + ": " + detail),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace deskml
