// Copyright 2026 The xmoe Authors.
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

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "xmoe/numerics/tensor.hpp"

namespace xmoe {

/// Counter-based generator. The k-th raw draw (k = 1, 2, ...) is
///
///   splitmix64_finalize(seed + k * 0x9E3779B97F4A7C15)
///
/// with the standard SplitMix64 finalizer (xor-shift 30 / mul
/// 0xBF58476D1CE4E5B9 / xor-shift 27 / mul 0x94D049BB133111EB / xor-shift 31).
/// This is exactly the SplitMix64 stream, so ports need only that function.
///
///  - uniform():  (raw >> 11) * 2^-53, in [0, 1)
///  - normal():   Box-Muller on two raw draws u1 = ((raw1 >> 11) + 1) * 2^-53,
///                u2 = (raw2 >> 11) * 2^-53; yields r*cos(2 pi u2) first and
///                caches r*sin(2 pi u2) for the next call.
///  - uniform_index(n): high 64 bits of the 128-bit product raw * n.
///  - substream(label): seed' = splitmix64_finalize(seed ^ fnv1a64(label)),
///                counter reset to 0.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  double normal() noexcept;
  std::size_t uniform_index(std::size_t n) noexcept;

  Rng substream(std::string_view label) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::optional<double> cached_normal_;
};

std::uint64_t splitmix64_finalize(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view s) noexcept;

/// i.i.d. standard normal draws in row-major order.
Tensor sample_normal(Rng& rng, const Shape& shape);

}  // namespace xmoe
