/* dsc - deep sparse Conformer encoder blocks.
 * Copyright (C) 2026 the dsc authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DSC_RNG_HPP_
#define DSC_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace dsc {

/// Counter-based deterministic generator. The output stream is a pure
/// function of (key, counter), so identical seeds give identical streams on
/// every platform, and child generators derived from (seed, label) are
/// statistically independent substreams that can be handed to parallel
/// workers without coordination.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : key_(mix64(seed ^ kDomainTag)) {}

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix64(key_ ^ counter_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  /// Unbiased uniform integer in [0, n). Rejection-sampled.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller on the portable uniform stream.
  double next_gaussian() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Derive an independent substream; the parent is not advanced.
  SeededRng child(std::uint64_t stream) const {
    SeededRng c(0);
    c.key_ = mix64(key_ ^ mix64(stream + kChildTag));
    c.counter_ = 0;
    return c;
  }

  SeededRng child(std::string_view label) const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (char ch : label) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
    return child(h);
  }

 private:
  static constexpr std::uint64_t kDomainTag = 0xD5C0FF5EEDULL;
  static constexpr std::uint64_t kChildTag = 0xC81D5EEDULL;

  // SplitMix64 finalizer.
  static std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace dsc

#endif  // DSC_RNG_HPP_
