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

#include <mutex>

#include "deskml/error.hpp"
#include "deskml/platform.hpp"

namespace deskml {

struct ApiRequest {
  std::string method;
  /// Decoded path, e.g. "/v1/sessions/alice/mnist/1/stop".
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  /// Value of "Authorization: Bearer <token>", if present.
  std::optional<std::string> bearer;
};

struct ApiResponse {
  int status = 200;
  Json body;
};

int http_status(ErrorCode code);

/// Transport-independent request handler for the /v1 surface. The HTTP server
/// is a thin adapter over handle(), so tests can drive either.
///
/// Session ids are user/dataset/N, so they occupy three path segments:
/// /v1/sessions/u/d/3/events.
class Api {
 public:
  /// tokens: user -> bearer token.
  Api(Platform& platform, std::map<UserId, std::string> tokens);

  ApiResponse handle(const ApiRequest& req);

  /// Resolves a bearer token to its user. Throws Unauthenticated.
  UserId authenticate(const std::optional<std::string>& bearer) const;

  Platform& platform() { return platform_; }

 private:
  ApiResponse route(const ApiRequest& req);
  ApiResponse sessions(const ApiRequest& req, const UserId& caller, const std::string& rest);
  ApiResponse telemetry(const ApiRequest& req, const UserId& caller, const std::string& rest);
  ApiResponse users(const ApiRequest& req, const UserId& caller, const std::string& rest);
  void require_admin(const UserId& caller) const;

  Platform& platform_;
  mutable std::mutex tokens_mu_;
  std::map<std::string, UserId> tokens_;  // token -> user
};

/// Session bundle written by `backup`: config, events, logs and checkpoint
/// manifests as named entries.
Json session_bundle(const Session& s, const std::vector<MetricEvent>& events, const std::vector<LogLine>& logs);

/// Opaque model manifest for one checkpoint.
Json checkpoint_manifest(const Session& s, const Checkpoint& c);

}  // namespace deskml
