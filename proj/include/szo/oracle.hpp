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

// Ground-truth machinery. Everything here works on copies of the parameters
// and is deliberately written without the in-place replay code it is used to
// check.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/masking.hpp"
#include "szo/models/task.hpp"
#include "szo/noise.hpp"
#include "szo/tensor.hpp"
#include "szo/zo.hpp"

namespace szo {

struct FdSpec {
  double delta = 1e-5;
};

inline constexpr std::size_t kFdCostGuard = 100'000;
inline constexpr std::size_t kReferenceMemoryGuard = 1'000'000;

// Central differences (L(theta + delta e_i) - L(theta - delta e_i)) / (2 delta)
// in flat order. f64 only.
template <Real T>
std::vector<double> fd_gradient(const LossFn<T>& loss, const ParameterSet<T>& p,
                                FdSpec spec = {}) {
  static_assert(std::same_as<T, double>, "finite differences run in f64");
  if (!(spec.delta > 0.0)) throw DomainError("fd delta must be positive");
  if (p.total_params() > kFdCostGuard) {
    throw DomainError("fd_gradient: " + std::to_string(p.total_params()) +
                      " parameters exceed the cost guard of " +
                      std::to_string(kFdCostGuard));
  }
  ParameterSet<T> work = p;
  std::vector<double> g;
  g.reserve(p.total_params());
  for (auto& layer : work.layers()) {
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const T orig = layer[i];
      layer[i] = orig + spec.delta;
      const double lp = loss(work);
      layer[i] = orig - spec.delta;
      const double lm = loss(work);
      layer[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw NumericError("fd_gradient: non-finite loss at layer '" + layer.name() +
                           "' index " + std::to_string(i));
      }
      g.push_back((lp - lm) / (2.0 * spec.delta));
    }
  }
  return g;
}

struct McMean {
  std::vector<double> mean;
  std::vector<double> standard_error;
  std::size_t samples = 0;
  std::size_t discarded = 0;
};

// Empirical mean of g = proj_grad * (m .* z) over fresh step seeds
// step_seed_for(seed, s), s = 0..n-1. proj_grad comes from the library's
// in-place estimator; the direction m .* z is rebuilt here from the noise
// streams. Per-coordinate standard errors use Welford accumulation.
template <Real T>
McMean mc_zo_mean(const LossFn<T>& loss, const ParameterSet<T>& p, double epsilon,
                  const Masker<T>& masker, std::size_t n_samples, std::uint64_t seed,
                  const FaultInjection& faults = {}) {
  if (n_samples < 1000) throw DomainError("mc_zo_mean needs at least 1000 samples");
  const std::size_t d = p.total_params();
  std::vector<double> mean(d, 0.0), m2(d, 0.0), g(d);
  ParameterSet<T> work = p;
  McMean out;
  std::size_t used = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::uint64_t step_seed = step_seed_for(seed, s);
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      std::copy(p.layer(l).values().begin(), p.layer(l).values().end(),
                work.layer(l).values().begin());
    }
    SpsaEstimate e;
    SparseMask mask;
    try {
      e = spsa_estimate(loss, work, epsilon, step_seed, masker, faults, nullptr, &mask);
    } catch (const NumericError&) {
      ++out.discarded;
      continue;
    }
    std::size_t k = 0;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      const NoiseStream z = derive_substream(step_seed, l);
      for (std::size_t i = 0; i < p.layer(l).size(); ++i, ++k) {
        const double zi = static_cast<double>(static_cast<T>(z.gaussian_at(i)));
        g[k] = mask.per_layer[l][i] ? e.proj_grad * zi : 0.0;
      }
    }
    ++used;
    for (std::size_t i = 0; i < d; ++i) {
      const double delta = g[i] - mean[i];
      mean[i] += delta / static_cast<double>(used);
      m2[i] += delta * (g[i] - mean[i]);
    }
  }
  if (out.discarded * 100 > n_samples) {
    throw NumericError("mc_zo_mean: " + std::to_string(out.discarded) + " of " +
                       std::to_string(n_samples) + " samples had non-finite losses");
  }
  out.samples = used;
  out.mean = std::move(mean);
  out.standard_error.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double var = used > 1 ? m2[i] / static_cast<double>(used - 1) : 0.0;
    out.standard_error[i] = std::sqrt(var / static_cast<double>(used));
  }
  return out;
}

template <Real T>
struct ReferenceResult {
  ParameterSet<T> params;
  ZoStepRecord record;
};

// Two-copy SPSA step: materializes theta + eps m.*z and theta - eps m.*z,
// evaluates both, and returns an updated copy. Learning rate follows the
// schedule in cfg; the mask comes from `masker` evaluated on p.
template <Real T>
ReferenceResult<T> reference_spsa_step(const Task<T>& task, const Batch& batch,
                                       const ParameterSet<T>& p, const ZoConfig& cfg,
                                       const Masker<T>& masker, std::size_t t) {
  if (p.total_params() > kReferenceMemoryGuard) {
    throw DomainError("reference_spsa_step: parameter count exceeds memory guard");
  }
  const std::uint64_t seed = step_seed_for(cfg.base_seed, t);
  const SparseMask mask = masker.materialize(p, seed);

  std::vector<std::vector<T>> z(p.num_layers());
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const NoiseStream s = derive_substream(seed, l);
    z[l].resize(p.layer(l).size());
    for (std::size_t i = 0; i < z[l].size(); ++i) z[l][i] = static_cast<T>(s.gaussian_at(i));
  }

  ParameterSet<T> plus = p, minus = p;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (std::size_t i = 0; i < z[l].size(); ++i) {
      if (!mask.per_layer[l][i]) continue;
      const double zi = static_cast<double>(z[l][i]);
      plus.layer(l)[i] = p.layer(l)[i] + static_cast<T>(cfg.epsilon * zi);
      minus.layer(l)[i] = p.layer(l)[i] + static_cast<T>(-cfg.epsilon * zi);
    }
  }

  ZoStepRecord rec;
  rec.step = t;
  rec.seed = seed;
  rec.loss_plus = task.evaluate(plus, batch);
  rec.loss_minus = task.evaluate(minus, batch);
  rec.proj_grad = (rec.loss_plus - rec.loss_minus) / (2.0 * cfg.epsilon);
  rec.d_hat = mask.d_hat();
  rec.lr = cfg.lr_schedule == LrSchedule::kTheory
               ? 1.0 / (4.0 * (static_cast<double>(rec.d_hat) + 4.0) * cfg.smoothness)
               : cfg.lr;

  ReferenceResult<T> out{p, rec};
  const double coeff = rec.lr * rec.proj_grad;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (std::size_t i = 0; i < z[l].size(); ++i) {
      if (!mask.per_layer[l][i]) continue;
      out.params.layer(l)[i] =
          p.layer(l)[i] - static_cast<T>(coeff * static_cast<double>(z[l][i]));
    }
  }
  return out;
}

template <Real T>
struct BaselineResult {
  ParameterSet<T> params;
  std::vector<double> losses;  // losses[k] = loss before step k; last entry is final
};

// Full-batch gradient descent on the training split. Uses the analytic
// gradient when the task has one, finite differences otherwise.
template <Real T>
BaselineResult<T> first_order_baseline(const Task<T>& task, const ParameterSet<T>& p,
                                       double lr, std::size_t steps) {
  if (!(lr > 0.0)) throw DomainError("learning rate must be positive");
  const Batch batch = task.full(Split::kTrain);
  BaselineResult<T> out{p, {}};
  out.losses.reserve(steps + 1);
  const double initial = task.evaluate(out.params, batch);
  out.losses.push_back(initial);
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<double> g;
    if (task.has_gradient()) {
      g = task.gradient(out.params, batch);
    } else if constexpr (std::same_as<T, double>) {
      g = fd_gradient<T>(bind_loss(task, batch), out.params);
    } else {
      throw StateError(task.name() + ": f32 baseline needs an analytic gradient");
    }
    axpy_into(out.params, -lr, g);
    const double l = task.evaluate(out.params, batch);
    out.losses.push_back(l);
    if (!std::isfinite(l) || l > 10.0 * std::max(initial, 1e-300)) {
      throw NumericError("first-order baseline diverged at step " + std::to_string(k) +
                         ": loss " + format_real(l) + " vs initial " +
                         format_real(initial) + " (lr " + format_real(lr) + ")");
    }
  }
  return out;
}

}  // namespace szo
