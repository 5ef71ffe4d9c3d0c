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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <array>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "szo/format.hpp"
#include "szo/models/logistic.hpp"
#include "szo/noise.hpp"
#include "szo/oracle.hpp"

namespace szo {

// Features fall into three groups with teacher magnitudes
//   large  (dim/4):   |w| in large_range
//   mid    (5 dim/8): |w| in mid_range
//   low    (dim/8):   |w| in low_range
// Task A labels come from w_A. Task B keeps the large and mid weights and
// replaces each low weight w by w (1 - 2 shift), so shift = 1 flips the
// signs of the low group. Both tasks share feature draws and label
// uniforms, so their optima differ only through the teacher change.
//
// The per-group feature scales keep the labels noisy (finite logistic
// optimum) while giving the low group a visible share of the logit and
// leaving real curvature on the mid group.
struct ShiftSpec {
  std::size_t dim = 64;
  std::size_t n_train = 4000;
  std::size_t n_eval = 1000;
  double large_feature_scale = 0.15;
  double mid_feature_scale = 0.6;
  double low_feature_scale = 1.5;
  // Teacher magnitude ranges [lo, hi] per group.
  std::array<double, 2> large_range{2.0, 3.0};
  std::array<double, 2> mid_range{0.6, 0.9};
  std::array<double, 2> low_range{0.15, 0.35};
  std::size_t pretrain_steps = 10000;
  // 0 picks 1 / L of task A.
  double pretrain_lr = 0.0;
};

template <Real T>
struct ShiftedTaskPair {
  std::shared_ptr<LogisticTask<T>> task_a;
  // Starts from the parameters pretrained on task A.
  std::shared_ptr<LogisticTask<T>> task_b;
  ParameterSet<T> pretrained;
  std::vector<std::size_t> large_group, mid_group, low_group;
  std::vector<double> weights_a, weights_b;
};

template <Real T>
ShiftedTaskPair<T> shifted_pair(const ShiftSpec& spec, double shift_magnitude,
                                std::uint64_t seed) {
  if (spec.dim < 8 || spec.dim % 8 != 0) {
    throw ConfigError("shifted pair dimension must be a positive multiple of 8");
  }
  if (!(shift_magnitude >= 0.0 && shift_magnitude <= 1.0)) {
    throw ConfigError("shift magnitude must lie in [0, 1]");
  }
  ShiftedTaskPair<T> pair;
  const std::size_t d = spec.dim;

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  NoiseStream perm(hash_pair(seed, 0x67726f75ull));
  for (std::size_t i = d - 1; i > 0; --i) {
    const auto j = std::min(i, static_cast<std::size_t>(perm.next_uniform() *
                                                        static_cast<double>(i + 1)));
    std::swap(order[i], order[j]);
  }
  pair.large_group.assign(order.begin(), order.begin() + d / 4);
  pair.mid_group.assign(order.begin() + d / 4, order.begin() + 7 * d / 8);
  pair.low_group.assign(order.begin() + 7 * d / 8, order.end());
  for (auto* g : {&pair.large_group, &pair.mid_group, &pair.low_group}) {
    std::sort(g->begin(), g->end());
  }

  NoiseStream mags(hash_pair(seed, 0x6d616773ull));
  std::vector<double> wa(d), scales(d, 1.0);
  const auto draw = [&](double lo, double hi) {
    const double m = lo + (hi - lo) * mags.next_uniform();
    return mags.next_uniform() < 0.5 ? -m : m;
  };
  for (std::size_t j : pair.large_group) {
    wa[j] = draw(spec.large_range[0], spec.large_range[1]);
    scales[j] = spec.large_feature_scale;
  }
  for (std::size_t j : pair.mid_group) {
    wa[j] = draw(spec.mid_range[0], spec.mid_range[1]);
    scales[j] = spec.mid_feature_scale;
  }
  for (std::size_t j : pair.low_group) {
    wa[j] = draw(spec.low_range[0], spec.low_range[1]);
    scales[j] = spec.low_feature_scale;
  }
  std::vector<double> wb = wa;
  for (std::size_t j : pair.low_group) wb[j] = wa[j] * (1.0 - 2.0 * shift_magnitude);

  LinearTeacher ta{wa, 0.0, scales, 0.0, true};
  LinearTeacher tb{wb, 0.0, scales, 0.0, true};
  const std::string base = "shifted dim=" + std::to_string(d) +
                           " train=" + std::to_string(spec.n_train) +
                           " eval=" + std::to_string(spec.n_eval) +
                           " scales=" + format_real(spec.large_feature_scale) + "/" +
                           format_real(spec.mid_feature_scale) + "/" +
                           format_real(spec.low_feature_scale) +
                           " shift=" + format_real(shift_magnitude) +
                           " seed=" + std::to_string(seed);
  pair.task_a = std::make_shared<LogisticTask<T>>(
      ta.sample(spec.n_train, hash_pair(seed, 11)),
      ta.sample(spec.n_eval, hash_pair(seed, 12)), base + " task=A");
  pair.task_b = std::make_shared<LogisticTask<T>>(
      tb.sample(spec.n_train, hash_pair(seed, 11)),
      tb.sample(spec.n_eval, hash_pair(seed, 12)), base + " task=B");

  const double lr = spec.pretrain_lr > 0.0 ? spec.pretrain_lr
                                           : 1.0 / *pair.task_a->smoothness();
  pair.pretrained = first_order_baseline<T>(*pair.task_a, pair.task_a->initial(), lr,
                                            spec.pretrain_steps)
                        .params;
  pair.task_b->set_initial(pair.pretrained);
  pair.weights_a = std::move(wa);
  pair.weights_b = std::move(wb);
  return pair;
}

// Share of ||theta||^2 held by the largest-magnitude quarter of the weights.
template <Real T>
double top_quarter_energy(std::span<const T> w) {
  std::vector<double> sq(w.size());
  std::transform(w.begin(), w.end(), sq.begin(),
                 [](T v) { return static_cast<double>(v) * static_cast<double>(v); });
  std::sort(sq.begin(), sq.end(), std::greater<>());
  const double total = std::accumulate(sq.begin(), sq.end(), 0.0);
  const double top = std::accumulate(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(sq.size() / 4), 0.0);
  return total > 0.0 ? top / total : 0.0;
}

}  // namespace szo
