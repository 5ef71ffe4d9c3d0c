// Copyright 2026 The sparse-zo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Replayable Gaussian noise.
//
// Every value is a pure function of (key, index): the key of a layer stream
// is hash_pair(step_seed, layer_id) and the index is the element position in
// that layer. Nothing depends on how many values were drawn before, so
// layers can be sampled in any order, and replaying a perturbation only
// needs the step seed.
//
// Mixing function: the SplitMix64 finalizer,
//   mix64(x) = fmix(x + 0x9e3779b97f4a7c15)
// with the constants below, and hash_pair(a, b) = mix64(a ^ mix64(b)).
// Uniforms take the top 53 bits of mix64(key ^ mix64(counter)). Gaussians
// use Box-Muller on counter pair k = i / 2: even indices take the cosine
// branch, odd indices the sine branch. These choices are frozen; changing
// them changes every recorded trajectory.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace szo {

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_pair(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b));
}

// Per-step seed schedule.
constexpr std::uint64_t step_seed_for(std::uint64_t base_seed,
                                      std::uint64_t step) noexcept {
  return hash_pair(base_seed, step);
}

// Domain tags keep independent uses of one step seed apart.
inline constexpr std::uint64_t kRandomMaskDomain = 0x6d61736b2d726e64ull;
inline constexpr std::uint64_t kMinibatchDomain = 0x626174636865732dull;
inline constexpr std::uint64_t kInitDomain = 0x696e69742d706172ull;

class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t cursor() const noexcept { return cursor_; }
  void seek(std::uint64_t index) noexcept { cursor_ = index; }

  // Uniform in [0, 1).
  double uniform_at(std::uint64_t i) const noexcept {
    return static_cast<double>(hash_pair(key_, i) >> 11) * 0x1.0p-53;
  }

  double gaussian_at(std::uint64_t i) const noexcept {
    const std::uint64_t pair = i >> 1;
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        static_cast<double>((hash_pair(key_, 2 * pair) >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform_at(2 * pair + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (i & 1) ? radius * std::sin(angle) : radius * std::cos(angle);
  }

  double next_gaussian() noexcept { return gaussian_at(cursor_++); }
  double next_uniform() noexcept { return uniform_at(cursor_++); }

  // Fills out with consecutive draws starting at the cursor.
  template <typename T>
  void gaussian_fill(std::span<T> out) noexcept {
    std::uint64_t i = cursor_;
    std::size_t k = 0;
    if ((i & 1) && k < out.size()) out[k++] = static_cast<T>(gaussian_at(i++));
    for (; k + 1 < out.size(); k += 2, i += 2) {
      const double u1 =
          static_cast<double>((hash_pair(key_, i) >> 11) + 1) * 0x1.0p-53;
      const double u2 = uniform_at(i + 1);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      out[k] = static_cast<T>(radius * std::cos(angle));
      out[k + 1] = static_cast<T>(radius * std::sin(angle));
    }
    if (k < out.size()) out[k++] = static_cast<T>(gaussian_at(i++));
    cursor_ = i;
  }

  std::vector<double> gaussian_fill(std::size_t n) {
    std::vector<double> out(n);
    gaussian_fill(std::span<double>(out));
    return out;
  }

 private:
  std::uint64_t key_;
  std::uint64_t cursor_ = 0;
};

inline NoiseStream derive_substream(std::uint64_t step_seed,
                                    std::uint64_t layer_id) noexcept {
  return NoiseStream(hash_pair(step_seed, layer_id));
}

}  // namespace szo
