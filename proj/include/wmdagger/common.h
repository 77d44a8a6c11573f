// Copyright 2026 The wmdagger Authors
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

#ifndef WMDAGGER_COMMON_H_
#define WMDAGGER_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace wmdagger {

// Error taxonomy shared across modules. Callers that map failures to exit
// codes (the CLI) switch on the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad shapes, out-of-range scalars).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Persisted data failed a structural check (truncation, overlap, counts).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

// A pipeline stage could not produce its output (NaN loss, expert gate).
class StageFailure : public Error {
 public:
  using Error::Error;
};

// A required input artifact does not exist on disk.
class MissingInput : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for stream `index` of the family `(base, salt)`. Streams derived this
// way do not depend on the order in which workers consume them.
constexpr std::uint64_t stream_seed(std::uint64_t base, std::uint64_t salt,
                                    std::uint64_t index = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ salt) ^ index);
}

inline Rng make_rng(std::uint64_t base, std::uint64_t salt,
                    std::uint64_t index = 0) {
  return Rng(stream_seed(base, salt, index));
}

// Stream salts. Distinct constants keep demo, evaluation and synthesis
// draws disjoint for the same global seed.
namespace streams {
inline constexpr std::uint64_t kDemo = 0x64656d6fULL;
inline constexpr std::uint64_t kEval = 0x6576616cULL;
inline constexpr std::uint64_t kPlay = 0x706c6179ULL;
inline constexpr std::uint64_t kSynthesis = 0x73796e74ULL;
inline constexpr std::uint64_t kHallucination = 0x68616c6cULL;
inline constexpr std::uint64_t kDmd = 0x646d6400ULL;
inline constexpr std::uint64_t kTrain = 0x74726e00ULL;
inline constexpr std::uint64_t kJitter = 0x6a697400ULL;
inline constexpr std::uint64_t kInit = 0x696e6974ULL;
}  // namespace streams

// 64-bit FNV-1a, stable across platforms (used for config hashes).
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace wmdagger

#endif  // WMDAGGER_COMMON_H_
