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

#include <cstdint>
#include <string>
#include <string_view>

namespace deskml {

/// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Hex-encoded SHA-256.
std::string sha256_hex(std::string_view data);

/// Counter-based generator: every draw is a pure function of (key, counter),
/// so any stream position can be recomputed without replaying the stream.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t at(std::uint64_t counter) const { return mix64(key_ ^ mix64(counter + 0x9e3779b97f4a7c15ULL)); }
  /// Uniform in [0, 1).
  double uniform_at(std::uint64_t counter) const;
  /// Standard normal via Box-Muller over two counters derived from `counter`.
  double normal_at(std::uint64_t counter) const;

  std::uint64_t next() { return at(pos_++); }
  double uniform() { return uniform_at(pos_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t key_;
  std::uint64_t pos_ = 0;
};

}  // namespace deskml
