// Copyright 2026 the prompate authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace prompate {

// Finalizer-style 64-bit avalanche mix.
uint64_t splitmix64(uint64_t x);

// FNV-1a over a byte range; `seed` allows chaining across buffers.
uint64_t hash_bytes(const void* data, size_t len,
                    uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t hash_string(std::string_view s);

// Stateless seed derivation: distinct (tag, index) pairs yield unrelated
// streams for the same master seed, independent of call order.
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index);

// Deterministic random source. Every uniform draw consumes exactly one
// engine output and every gaussian draw exactly two, so stream positions
// are schedule-independent and replayable.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in (0, 1]; never zero, so log() is always safe.
  double uniform();
  double uniform(double lo, double hi);
  size_t uniform_index(size_t n);

  // Standard normal via Box-Muller (no cached second sample).
  double gaussian();
  double gaussian(double mean, double stddev);

  uint64_t gaussian_draws() const { return gaussian_draws_; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  uint64_t gaussian_draws_ = 0;
};

// Identity permutation [0, n) shuffled by the given stream.
std::vector<size_t> shuffled_indices(size_t n, RandomStream& rng);

}  // namespace prompate
