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

#include <atomic>
#include <memory>
#include <thread>

#include "deskml/gateway/api.hpp"
#include "deskml/notifier.hpp"

namespace deskml {

/// HTTP front end for an Api. Bodies are compact JSON; GET .../logs?follow=1
/// streams newline-delimited JSON until the session is terminal.
class Server {
 public:
  Server(Api& api, std::string host, int port);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on a background thread. Port 0 picks a free
  /// port. Throws Error(Unavailable) if the address cannot be bound.
  void start();
  void stop();
  int port() const;
  /// Serves static files under /ui.
  void mount_ui(const std::filesystem::path& dir);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Advances a platform's virtual clock in step with the wall clock.
class SimTicker {
 public:
  /// scale: virtual ms per wall ms.
  SimTicker(Platform& platform, double scale, std::chrono::milliseconds period = std::chrono::milliseconds(50));
  ~SimTicker();

 private:
  Platform& platform_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

/// POSTs each notification as JSON to an http:// URL.
class WebhookSink final : public NotificationSink {
 public:
  explicit WebhookSink(std::string url);
  void deliver(const Notification& n) override;
  std::string name() const override { return "webhook:" + url_; }

 private:
  std::string url_;
  std::string origin_;
  std::string path_;
};

}  // namespace deskml
