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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace deskml {

struct CliOptions {
  /// Base URL of the gateway, e.g. http://127.0.0.1:8470.
  std::string host = "http://127.0.0.1:8470";
  /// Where `login` stores the token.
  std::filesystem::path token_file;
};

/// Host from DESKML_HOST, token file from DESKML_TOKEN_FILE (default
/// ~/.deskml_token).
CliOptions cli_options_from_env();

/// Exit codes: 0 ok, 1 other failure, 2 usage, 3 invalid argument,
/// 4 not found, 5 authentication or permission, 6 state conflict,
/// 7 admission rejected, 8 server unreachable or unavailable.
int cli_exit_code(const std::string& error_code);

/// Runs one client command. `args` excludes the program name. With --json the
/// server's response body is printed verbatim.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliOptions& opts);

}  // namespace deskml
