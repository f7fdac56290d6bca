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

#include "deskml/gateway/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace deskml {

namespace {

ApiRequest to_api(const httplib::Request& req) {
  ApiRequest r;
  r.method = req.method;
  r.path = req.path;
  for (const auto& [k, v] : req.params) r.query[k] = v;
  r.body = req.body;
  auto auth = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (auth.rfind(prefix, 0) == 0) r.bearer = auth.substr(prefix.size());
  return r;
}

void write(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

bool is_follow(const httplib::Request& req) {
  const std::string suffix = "/logs";
  return req.method == "GET" && req.path.size() > suffix.size() &&
         req.path.compare(req.path.size() - suffix.size(), suffix.size(), suffix) == 0 &&
         req.get_param_value("follow") == "1";
}

}  // namespace

struct Server::Impl {
  Api& api;
  std::string host;
  int port;
  httplib::Server http;
  std::thread thread;

  Impl(Api& a, std::string h, int p) : api(a), host(std::move(h)), port(p) {}

  void follow_logs(const httplib::Request& req, httplib::Response& res) {
    auto base = to_api(req);
    base.query.erase("follow");
    auto first = api.handle(base);
    if (first.status != 200) return write(res, first);
    auto session_req = base;
    session_req.path = base.path.substr(0, base.path.size() - 5);
    res.set_chunked_content_provider(
        "application/x-ndjson", [this, base, session_req, sent = std::size_t{0}](std::size_t, httplib::DataSink& sink) mutable {
          auto logs = api.handle(base);
          if (logs.status != 200) {
            auto line = logs.body.dump() + "\n";
            sink.write(line.data(), line.size());
            sink.done();
            return true;
          }
          const auto& lines = logs.body.at("lines");
          for (; sent < lines.size(); ++sent) {
            auto line = lines[sent].dump() + "\n";
            if (!sink.write(line.data(), line.size())) return false;
          }
          auto s = api.handle(session_req);
          if (s.status != 200 || is_terminal(s.body.at("state").get<SessionState>())) {
            sink.done();
            return true;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
          return true;
        });
  }
};

Server::Server(Api& api, std::string host, int port) : impl_(std::make_unique<Impl>(api, std::move(host), port)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    if (is_follow(req)) return impl_->follow_logs(req, res);
    write(res, impl_->api.handle(to_api(req)));
  };
  impl_->http.Get(R"(/v1/.*)", handler);
  impl_->http.Post(R"(/v1/.*)", handler);
  impl_->http.Get(R"(/internal/.*)", handler);
}

Server::~Server() { stop(); }

void Server::start() {
  auto& h = impl_->http;
  if (impl_->port == 0) {
    impl_->port = h.bind_to_any_port(impl_->host);
    if (impl_->port < 0) throw Error(ErrorCode::Unavailable, "cannot bind " + impl_->host);
  } else if (!h.bind_to_port(impl_->host, impl_->port)) {
    throw Error(ErrorCode::Unavailable,
                "cannot bind " + impl_->host + ":" + std::to_string(impl_->port) + " (port busy?)");
  }
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  spdlog::info("gateway listening on {}:{}", impl_->host, impl_->port);
}

void Server::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->http.stop();
  impl_->thread.join();
}

int Server::port() const { return impl_->port; }

void Server::mount_ui(const std::filesystem::path& dir) {
  if (!impl_->http.set_mount_point("/ui", dir.string()))
    throw Error(ErrorCode::InvalidArgument, "ui directory " + dir.string() + " does not exist");
}

SimTicker::SimTicker(Platform& platform, double scale, std::chrono::milliseconds period) : platform_(platform) {
  if (scale <= 0) return;
  thread_ = std::thread([this, scale, period] {
    auto start_wall = std::chrono::steady_clock::now();
    auto start_virtual = platform_.now();
    while (!stop_) {
      std::this_thread::sleep_for(period);
      auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_wall);
      auto target = start_virtual + static_cast<Timestamp>(static_cast<double>(wall.count()) * scale);
      if (target > platform_.now()) platform_.advance_to(target);
    }
  });
}

SimTicker::~SimTicker() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

WebhookSink::WebhookSink(std::string url) : url_(std::move(url)) {
  const std::string scheme = "http://";
  if (url_.rfind(scheme, 0) != 0) throw Error(ErrorCode::InvalidArgument, "webhook URL must start with http://");
  auto slash = url_.find('/', scheme.size());
  origin_ = slash == std::string::npos ? url_ : url_.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url_.substr(slash);
}

void WebhookSink::deliver(const Notification& n) {
  httplib::Client client(origin_);
  client.set_connection_timeout(2);
  client.set_read_timeout(5);
  auto res = client.Post(path_, Json(n).dump(), "application/json");
  if (!res) throw Error(ErrorCode::Unavailable, "webhook " + url_ + " unreachable: " + httplib::to_string(res.error()));
  if (res->status / 100 != 2)
    throw Error(ErrorCode::Unavailable, "webhook " + url_ + " answered " + std::to_string(res->status));
}

}  // namespace deskml
