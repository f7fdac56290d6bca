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

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <condition_variable>
#include <csignal>
#include <mutex>

#include "deskml/gateway/api.hpp"
#include "deskml/gateway/config.hpp"
#include "deskml/gateway/server.hpp"

namespace {

std::mutex g_mu;
std::condition_variable g_cv;
volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deskmld: deskml control plane daemon", "deskmld"};
  std::string config_path;
  std::string ui_dir;
  std::optional<int> port;
  std::string log_level = "info";
  app.add_option("-c,--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("-p,--port", port, "Override [server] port");
  app.add_option("--ui", ui_dir, "Serve dashboard assets from this directory under /ui");
  app.add_option("--log-level", log_level)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    auto cfg = deskml::load_gateway_config(config_path);
    if (port) cfg.port = *port;
    deskml::PlatformOptions opts;
    opts.data_dir = cfg.data_dir;
    deskml::Platform platform(deskml::boot_scenario(cfg), opts);
    if (cfg.notify_file) platform.notifier().add_sink(std::make_shared<deskml::FileSink>(*cfg.notify_file));
    if (cfg.webhook) platform.notifier().add_sink(std::make_shared<deskml::WebhookSink>(*cfg.webhook));

    deskml::Api api(platform, cfg.tokens);
    deskml::Server server(api, cfg.bind, cfg.port);
    if (!ui_dir.empty()) server.mount_ui(ui_dir);
    server.start();

    std::optional<deskml::SimTicker> ticker;
    if (cfg.time_scale > 0) ticker.emplace(platform, cfg.time_scale);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::unique_lock lock(g_mu);
    while (!g_stop) g_cv.wait_for(lock, std::chrono::milliseconds(100));
    spdlog::info("shutting down");
    ticker.reset();
    server.stop();
  } catch (const deskml::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
