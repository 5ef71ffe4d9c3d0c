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

#include <optional>
#include <string>

#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/harness/config.hpp"
#include "szo/harness/run.hpp"

namespace szo {

// Peak optimizer-side scratch of a fused run against a run that
// materializes the perturbed copy and the mask.
struct AllocationReport {
  std::size_t fused_peak = 0;
  std::size_t naive_peak = 0;
  double ratio = 0.0;  // fused / naive
  std::size_t max_layer_bytes = 0;
  std::size_t total_param_bytes = 0;

  std::string text() const {
    return "fused_peak_bytes=" + std::to_string(fused_peak) +
           " naive_peak_bytes=" + std::to_string(naive_peak) +
           " ratio=" + format_real(ratio) +
           " max_layer_bytes=" + std::to_string(max_layer_bytes) +
           " total_param_bytes=" + std::to_string(total_param_bytes);
  }
};

inline AllocationReport allocation_report(const RunMetrics& fused, const RunMetrics& naive,
                                          std::size_t max_layer_bytes = 0,
                                          std::size_t total_param_bytes = 0) {
  if (!fused.peak_aux_bytes || !naive.peak_aux_bytes) {
    throw StateError("allocation_report: run '" +
                     (fused.peak_aux_bytes ? naive.label : fused.label) +
                     "' carries no allocation instrumentation");
  }
  if (*naive.peak_aux_bytes == 0) {
    throw StateError("allocation_report: naive run recorded no allocations");
  }
  AllocationReport r;
  r.fused_peak = *fused.peak_aux_bytes;
  r.naive_peak = *naive.peak_aux_bytes;
  r.ratio = static_cast<double>(r.fused_peak) / static_cast<double>(r.naive_peak);
  r.max_layer_bytes = max_layer_bytes;
  r.total_param_bytes = total_param_bytes;
  return r;
}

// Runs a few steps of cfg on `task` in fused and in materialized mode.
template <Real T>
AllocationReport measure_allocation(const Task<T>& task, ExperimentConfig cfg,
                                    std::size_t steps = 3) {
  if (cfg.optimizer == Optimizer::kFoBaseline) {
    throw ConfigError("allocation accounting covers zeroth-order optimizers only");
  }
  cfg.steps = steps;
  cfg.eval_every = steps;
  cfg.mode = EvalMode::kFused;
  const RunMetrics fused = run_single<T>(cfg, task, cfg.seeds.front());
  cfg.mode = EvalMode::kMaterialized;
  const RunMetrics naive = run_single<T>(cfg, task, cfg.seeds.front());
  const auto& p = task.initial();
  return allocation_report(fused, naive, p.max_layer_size() * sizeof(T),
                           p.total_params() * sizeof(T));
}

}  // namespace szo
