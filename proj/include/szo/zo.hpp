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

#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "szo/error.hpp"
#include "szo/masking.hpp"
#include "szo/models/task.hpp"
#include "szo/noise.hpp"
#include "szo/scratch.hpp"
#include "szo/tensor.hpp"

namespace szo {

enum class LrSchedule { kConstant, kTheory };

// How the two perturbed losses of a step are evaluated.
//   kFused        - perturbed layers are formed one at a time inside the
//                   forward pass; parameters are only written by the update.
//   kInPlace      - parameters are perturbed +eps, -2eps, +eps in place with
//                   seed replay.
//   kMaterialized - full perturbed copy plus materialized mask (naive
//                   two-copy reference for memory comparisons).
enum class EvalMode { kFused, kInPlace, kMaterialized };

inline std::string to_string(LrSchedule s) {
  return s == LrSchedule::kConstant ? "constant" : "theory";
}
inline std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::kFused: return "fused";
    case EvalMode::kInPlace: return "inplace";
    case EvalMode::kMaterialized: return "materialized";
  }
  return "?";
}

// Deliberate defects used to check that the verification suite notices them.
struct FaultInjection {
  // Recompute the mask from the current (perturbed) values in every phase.
  bool unfrozen_mask = false;
  // Divide the loss difference by eps instead of 2 eps.
  bool wrong_denominator = false;
};

struct ZoConfig {
  double epsilon = 1e-3;
  double lr = 1e-6;
  MaskPolicy policy;
  std::uint64_t base_seed = 0;
  std::size_t steps = 20000;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  // Smoothness constant used by the theory schedule.
  double smoothness = 0.0;
  EvalMode mode = EvalMode::kFused;
  // Recalibrate thresholds every this many steps; 0 keeps the initial ones.
  std::size_t sparsify_interval = 0;
  bool record_wallclock = false;
  FaultInjection faults;

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (lr_schedule == LrSchedule::kConstant && !(lr > 0.0)) {
      throw ConfigError("lr must be positive");
    }
    if (lr_schedule == LrSchedule::kTheory && !(smoothness > 0.0)) {
      throw ConfigError("theory schedule needs a positive smoothness constant");
    }
    if (steps < 1) throw ConfigError("steps must be at least 1");
    policy.validate();
  }
};

struct ZoStepRecord {
  std::size_t step = 0;
  std::uint64_t seed = 0;
  double loss_plus = 0.0;
  double loss_minus = 0.0;
  double proj_grad = 0.0;
  std::size_t d_hat = 0;
  double lr = 0.0;
  std::int64_t wallclock_us = 0;

  // Wallclock is not part of the numerical identity of a step.
  bool same_numerics(const ZoStepRecord& o) const {
    return step == o.step && seed == o.seed && d_hat == o.d_hat &&
           std::bit_cast<std::uint64_t>(loss_plus) == std::bit_cast<std::uint64_t>(o.loss_plus) &&
           std::bit_cast<std::uint64_t>(loss_minus) == std::bit_cast<std::uint64_t>(o.loss_minus) &&
           std::bit_cast<std::uint64_t>(proj_grad) == std::bit_cast<std::uint64_t>(o.proj_grad) &&
           std::bit_cast<std::uint64_t>(lr) == std::bit_cast<std::uint64_t>(o.lr);
  }
};

// eta = 1 / (4 (d_hat + 4) L)
inline double theory_lr(double d_hat, double smoothness) {
  if (!(smoothness > 0.0)) throw DomainError("smoothness constant must be positive");
  if (d_hat < 0.0) throw DomainError("d_hat must be non-negative");
  return 1.0 / (4.0 * (d_hat + 4.0) * smoothness);
}

// Order-of-magnitude step count d_hat * L / sigma^2 (absolute constant 1).
inline double theory_step_bound(double d_hat, double smoothness, double sigma_sq) {
  if (!(d_hat > 0.0)) throw DomainError("d_hat must be positive");
  if (!(smoothness > 0.0)) throw DomainError("smoothness constant must be positive");
  if (!(sigma_sq > 0.0)) throw DomainError("sigma^2 must be positive");
  return d_hat * smoothness / sigma_sq;
}

// The single perturbation formula shared by every path: theta + T(scale * z).
// A zero step returns theta untouched so that -0 keeps its sign.
template <Real T>
inline T perturbed_value(T theta, double scale, T z) {
  const T delta = static_cast<T>(scale * static_cast<double>(z));
  return delta == T{0} ? theta : theta + delta;
}

namespace zo_detail {

template <Real T>
void fill_layer_noise(std::uint64_t step_seed, std::size_t layer_id,
                      std::span<T> out) {
  derive_substream(step_seed, layer_id).gaussian_fill(out);
}

// theta <- theta + scale * m * z over every layer. SelectorFor maps a layer id
// to a LayerSelector; it is evaluated on the values as they are before this
// call. A layer is written only if all of its new values are finite; on
// failure earlier layers are rolled back and NumericError is thrown.
template <Real T, typename SelectorFor>
std::size_t apply_scaled_noise(ParameterSet<T>& p, double scale,
                               std::uint64_t step_seed, SelectorFor&& selector_for,
                               AllocationLedger* ledger) {
  ScratchBuffer<T> z(ledger, p.max_layer_size());
  std::size_t d_hat = 0;
  for (auto& layer : p.layers()) {
    const std::size_t n = layer.size();
    auto zs = z.span().first(n);
    fill_layer_noise(step_seed, layer.layer_id(), zs);
    const LayerSelector sel = selector_for(layer.layer_id());
    auto values = layer.values();
    for (std::size_t i = 0; i < n; ++i) {
      if (!sel(i, static_cast<double>(values[i]))) continue;
      if (!std::isfinite(perturbed_value(values[i], scale, zs[i]))) {
        // Roll back earlier layers. Exact for index-based selections; for
        // magnitude selections the rule is re-evaluated on the reverted value.
        for (std::size_t k = 0; k < layer.layer_id(); ++k) {
          auto& prev = p.layer(k);
          auto zp = z.span().first(prev.size());
          fill_layer_noise(step_seed, k, zp);
          const LayerSelector psel = selector_for(k);
          auto pv = prev.values();
          for (std::size_t j = 0; j < pv.size(); ++j) {
            const T reverted = perturbed_value(pv[j], -scale, zp[j]);
            if (psel(j, static_cast<double>(reverted))) pv[j] = reverted;
          }
        }
        throw NumericError("non-finite parameter in layer '" + layer.name() +
                               "' at index " + std::to_string(i),
                           step_seed);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (sel(i, static_cast<double>(values[i]))) {
        values[i] = perturbed_value(values[i], scale, zs[i]);
        ++d_hat;
      }
    }
  }
  return d_hat;
}

}  // namespace zo_detail

// theta <- theta + scale * m * z with m given explicitly.
template <Real T>
std::size_t perturb_parameters(ParameterSet<T>& p, double scale,
                               std::uint64_t step_seed, const SparseMask& mask,
                               AllocationLedger* ledger = nullptr) {
  if (mask.per_layer.size() != p.num_layers()) {
    throw StructuralError("mask layer count does not match parameters");
  }
  return zo_detail::apply_scaled_noise(
      p, scale, step_seed,
      [&](std::size_t id) { return LayerSelector::stored(mask.per_layer[id]); },
      ledger);
}

// theta <- theta + scale * m * z with m evaluated on the current values.
template <Real T>
std::size_t perturb_parameters(ParameterSet<T>& p, double scale,
                               std::uint64_t step_seed, const Masker<T>& masker,
                               AllocationLedger* ledger = nullptr) {
  return zo_detail::apply_scaled_noise(
      p, scale, step_seed,
      [&](std::size_t id) { return masker.selector(id, step_seed); }, ledger);
}

// Enforces the +eps, -2eps, +eps perturbation cycle on one parameter set.
// The mask of the unperturbed parameters is captured at construction and
// reused by every phase.
template <Real T>
class PerturbCycle {
 public:
  enum class Phase { kIdle, kPlus, kMinus, kRestored };

  PerturbCycle(ParameterSet<T>& p, double epsilon, std::uint64_t step_seed,
               const Masker<T>& masker, AllocationLedger* ledger = nullptr,
               bool freeze_mask = true)
      : p_(p),
        epsilon_(epsilon),
        seed_(step_seed),
        masker_(masker),
        ledger_(ledger),
        freeze_(freeze_mask) {
    frozen_ = masker.materialize(p, step_seed);
    d_hat_ = frozen_.d_hat();
    if (ledger_) ledger_->acquire(p.total_params());
  }
  PerturbCycle(const PerturbCycle&) = delete;
  PerturbCycle& operator=(const PerturbCycle&) = delete;
  ~PerturbCycle() {
    if (ledger_) ledger_->release(p_.total_params());
  }

  Phase phase() const noexcept { return phase_; }
  std::size_t d_hat() const noexcept { return d_hat_; }
  const SparseMask& frozen_mask() const noexcept { return frozen_; }

  void to_plus() {
    expect(Phase::kIdle, "+eps");
    apply(epsilon_);
    phase_ = Phase::kPlus;
  }
  void to_minus() {
    expect(Phase::kPlus, "-2eps");
    apply(-2.0 * epsilon_);
    phase_ = Phase::kMinus;
  }
  void restore() {
    expect(Phase::kMinus, "restoring +eps");
    apply(epsilon_);
    phase_ = Phase::kRestored;
  }
  // Undo whatever part of the cycle has been applied.
  void abort() {
    if (phase_ == Phase::kPlus) apply(-epsilon_);
    if (phase_ == Phase::kMinus) apply(epsilon_);
    phase_ = Phase::kRestored;
  }

 private:
  void expect(Phase want, const char* op) const {
    if (phase_ != want) {
      throw StateError(std::string("illegal perturbation cycle: ") + op +
                       " requested out of order");
    }
  }
  void apply(double scale) {
    if (freeze_) {
      perturb_parameters(p_, scale, seed_, frozen_, ledger_);
    } else {
      perturb_parameters(p_, scale, seed_, masker_, ledger_);
    }
  }

  ParameterSet<T>& p_;
  double epsilon_;
  std::uint64_t seed_;
  const Masker<T>& masker_;
  AllocationLedger* ledger_;
  bool freeze_;
  SparseMask frozen_;
  std::size_t d_hat_ = 0;
  Phase phase_ = Phase::kIdle;
};

// Serves layers theta + scale * m(theta) * z built one at a time in scratch.
template <Real T>
class FusedSource final : public LayerSource<T> {
 public:
  FusedSource(const ParameterSet<T>& p, double scale, std::uint64_t step_seed,
              const Masker<T>& masker, AllocationLedger* ledger)
      : p_(p), scale_(scale), seed_(step_seed), masker_(masker), ledger_(ledger) {}

  std::span<const T> fetch(std::size_t layer_id) override {
    if (next_ != layer_id) {
      throw StateError("fused forward fetched layer " + std::to_string(layer_id) +
                       " but layer " + std::to_string(next_) + " was due");
    }
    ++next_;
    perturbed_.reset();
    const auto& layer = p_.layer(layer_id);
    const std::size_t n = layer.size();
    ScratchBuffer<T> z(ledger_, n);
    perturbed_ = ScratchBuffer<T>(ledger_, n);
    zo_detail::fill_layer_noise(seed_, layer_id, z.span());
    const LayerSelector sel = masker_.selector(layer_id, seed_);
    for (std::size_t i = 0; i < n; ++i) {
      const T theta = layer[i];
      if (sel(i, static_cast<double>(theta))) {
        perturbed_[i] = perturbed_value(theta, scale_, z[i]);
        ++d_hat_;
      } else {
        perturbed_[i] = theta;
      }
    }
    return perturbed_.span();
  }

  std::size_t d_hat() const noexcept { return d_hat_; }
  std::size_t layers_served() const noexcept { return next_; }

 private:
  const ParameterSet<T>& p_;
  double scale_;
  std::uint64_t seed_;
  const Masker<T>& masker_;
  AllocationLedger* ledger_;
  ScratchBuffer<T> perturbed_;
  std::size_t next_ = 0;
  std::size_t d_hat_ = 0;
};

// Loss at theta + scale * m(theta) * z without writing to p. Peak scratch is
// two buffers of the current layer's size.
template <Real T>
double fused_forward_perturbed(const Task<T>& task, const ParameterSet<T>& p,
                               double scale, std::uint64_t step_seed,
                               const Masker<T>& masker, const Batch& batch,
                               AllocationLedger* ledger = nullptr,
                               std::size_t* d_hat_out = nullptr) {
  FusedSource<T> src(p, scale, step_seed, masker, ledger);
  const double loss = task.loss(src, batch);
  if (src.layers_served() != p.num_layers()) {
    throw StateError(task.name() + " did not consume every layer in the fused forward");
  }
  if (d_hat_out) *d_hat_out = src.d_hat();
  return loss;
}

// Same loss through a materialized mask and a full perturbed copy.
template <Real T>
double materialized_forward_perturbed(const Task<T>& task, const ParameterSet<T>& p,
                                      double scale, std::uint64_t step_seed,
                                      const Masker<T>& masker, const Batch& batch,
                                      AllocationLedger* ledger = nullptr,
                                      std::size_t* d_hat_out = nullptr) {
  const SparseMask mask = masker.materialize(p, step_seed);
  if (ledger) ledger->acquire(p.total_params());
  if (ledger) ledger->acquire(p.total_params() * sizeof(T));
  ParameterSet<T> copy = p;
  double loss = 0.0;
  try {
    perturb_parameters(copy, scale, step_seed, mask, ledger);
    loss = task.evaluate(copy, batch);
  } catch (...) {
    if (ledger) ledger->release(p.total_params() * (sizeof(T) + 1));
    throw;
  }
  if (ledger) ledger->release(p.total_params() * (sizeof(T) + 1));
  if (d_hat_out) *d_hat_out = mask.d_hat();
  return loss;
}

struct SpsaEstimate {
  double proj_grad = 0.0;
  double loss_plus = 0.0;
  double loss_minus = 0.0;
  std::size_t d_hat = 0;
};

namespace zo_detail {

inline double projected_gradient(double lp, double lm, double epsilon,
                                 const FaultInjection& faults) {
  const double denom = faults.wrong_denominator ? epsilon : 2.0 * epsilon;
  return (lp - lm) / denom;
}

inline void require_finite_losses(double lp, double lm, std::uint64_t seed) {
  if (!std::isfinite(lp) || !std::isfinite(lm)) {
    throw NumericError("non-finite loss (l+ = " + std::to_string(lp) +
                           ", l- = " + std::to_string(lm) + ") at step seed " +
                           std::to_string(seed),
                       seed);
  }
}

}  // namespace zo_detail

// In-place estimate: perturb(+eps) -> l+ -> perturb(-2eps) -> l- ->
// perturb(+eps). p is restored before returning, including on error.
template <Real T>
SpsaEstimate spsa_estimate(const LossFn<T>& loss, ParameterSet<T>& p,
                           double epsilon, std::uint64_t step_seed,
                           const Masker<T>& masker, const FaultInjection& faults = {},
                           AllocationLedger* ledger = nullptr,
                           SparseMask* frozen_out = nullptr) {
  PerturbCycle<T> cycle(p, epsilon, step_seed, masker, ledger, !faults.unfrozen_mask);
  SpsaEstimate e;
  e.d_hat = cycle.d_hat();
  try {
    cycle.to_plus();
    e.loss_plus = loss(p);
    cycle.to_minus();
    e.loss_minus = loss(p);
    cycle.restore();
  } catch (...) {
    cycle.abort();
    throw;
  }
  zo_detail::require_finite_losses(e.loss_plus, e.loss_minus, step_seed);
  e.proj_grad = zo_detail::projected_gradient(e.loss_plus, e.loss_minus, epsilon, faults);
  if (frozen_out) *frozen_out = cycle.frozen_mask();
  return e;
}

// Estimate through a task, in any evaluation mode. In-place mode returns the
// frozen mask through frozen_out for the matching update.
template <Real T>
SpsaEstimate spsa_estimate(const Task<T>& task, const Batch& batch,
                           ParameterSet<T>& p, double epsilon,
                           std::uint64_t step_seed, const Masker<T>& masker,
                           EvalMode mode, const FaultInjection& faults = {},
                           AllocationLedger* ledger = nullptr,
                           SparseMask* frozen_out = nullptr) {
  if (mode == EvalMode::kInPlace) {
    return spsa_estimate<T>(bind_loss(task, batch), p, epsilon, step_seed, masker,
                            faults, ledger, frozen_out);
  }
  SpsaEstimate e;
  std::size_t d_hat_minus = 0;
  if (mode == EvalMode::kFused) {
    e.loss_plus = fused_forward_perturbed(task, p, epsilon, step_seed, masker,
                                          batch, ledger, &e.d_hat);
    e.loss_minus = fused_forward_perturbed(task, p, -epsilon, step_seed, masker,
                                           batch, ledger, &d_hat_minus);
  } else {
    e.loss_plus = materialized_forward_perturbed(task, p, epsilon, step_seed,
                                                 masker, batch, ledger, &e.d_hat);
    e.loss_minus = materialized_forward_perturbed(task, p, -epsilon, step_seed,
                                                  masker, batch, ledger, &d_hat_minus);
  }
  zo_detail::require_finite_losses(e.loss_plus, e.loss_minus, step_seed);
  e.proj_grad = zo_detail::projected_gradient(e.loss_plus, e.loss_minus, epsilon, faults);
  return e;
}

// theta <- theta - lr * proj_grad * m * z, z replayed from step_seed and m
// evaluated on the current values.
template <Real T>
std::size_t apply_update(ParameterSet<T>& p, double proj_grad, double lr,
                         std::uint64_t step_seed, const Masker<T>& masker,
                         AllocationLedger* ledger = nullptr) {
  return perturb_parameters(p, -(lr * proj_grad), step_seed, masker, ledger);
}

// Same update with an explicit mask.
template <Real T>
std::size_t apply_update(ParameterSet<T>& p, double proj_grad, double lr,
                         std::uint64_t step_seed, const SparseMask& mask,
                         AllocationLedger* ledger = nullptr) {
  return perturb_parameters(p, -(lr * proj_grad), step_seed, mask, ledger);
}

// One optimizer per parameter set: dense MeZO when the policy is dense,
// Sparse-MeZO otherwise.
template <Real T>
class ZoStepper {
 public:
  ZoStepper(ZoConfig cfg, const ParameterSet<T>& initial,
            AllocationLedger* ledger = nullptr)
      : cfg_(std::move(cfg)), masker_(initial, cfg_.policy), ledger_(ledger) {
    cfg_.validate();
  }

  const ZoConfig& config() const noexcept { return cfg_; }
  const Masker<T>& masker() const noexcept { return masker_; }
  Masker<T>& masker() noexcept { return masker_; }

  std::uint64_t seed_for(std::size_t t) const {
    return step_seed_for(cfg_.base_seed, t);
  }

  double lr_for(std::size_t d_hat) const {
    return cfg_.lr_schedule == LrSchedule::kTheory
               ? theory_lr(static_cast<double>(d_hat), cfg_.smoothness)
               : cfg_.lr;
  }

  // Both losses use the same batch. On error p holds its pre-step values
  // (up to in-place rounding) and the exception carries the step seed.
  ZoStepRecord step(const Task<T>& task, ParameterSet<T>& p, const Batch& batch,
                    std::size_t t) {
    return run(p, t, [&](std::uint64_t seed, SparseMask* frozen) {
      return spsa_estimate(task, batch, p, cfg_.epsilon, seed, masker_, cfg_.mode,
                           cfg_.faults, ledger_, frozen);
    });
  }

  // Plain loss function; always evaluated in place.
  ZoStepRecord step(const LossFn<T>& loss, ParameterSet<T>& p, std::size_t t) {
    return run(p, t, [&](std::uint64_t seed, SparseMask* frozen) {
      return spsa_estimate(loss, p, cfg_.epsilon, seed, masker_, cfg_.faults,
                           ledger_, frozen);
    });
  }

 private:
  template <typename Estimate>
  ZoStepRecord run(ParameterSet<T>& p, std::size_t t, Estimate&& estimate) {
    if (t >= cfg_.steps) {
      throw StateError("step " + std::to_string(t) + " is beyond the configured " +
                       std::to_string(cfg_.steps) + " steps");
    }
    if (cfg_.sparsify_interval > 0 && t > 0 && t % cfg_.sparsify_interval == 0) {
      masker_.recalibrate(p);
    }
    const auto start = std::chrono::steady_clock::now();
    ZoStepRecord rec;
    rec.step = t;
    rec.seed = seed_for(t);

    SparseMask frozen;
    const SpsaEstimate e = estimate(rec.seed, &frozen);
    rec.loss_plus = e.loss_plus;
    rec.loss_minus = e.loss_minus;
    rec.proj_grad = e.proj_grad;
    rec.d_hat = e.d_hat;
    rec.lr = lr_for(e.d_hat);

    if (!frozen.per_layer.empty() && !cfg_.faults.unfrozen_mask) {
      apply_update(p, rec.proj_grad, rec.lr, rec.seed, frozen, ledger_);
    } else {
      apply_update(p, rec.proj_grad, rec.lr, rec.seed, masker_, ledger_);
    }
    if (cfg_.record_wallclock) {
      rec.wallclock_us = std::chrono::duration_cast<std::chrono::microseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    }
    return rec;
  }

  ZoConfig cfg_;
  Masker<T> masker_;
  AllocationLedger* ledger_;
};

}  // namespace szo
