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
#include <string>
#include <vector>

#include "szo/format.hpp"
#include "szo/models/task.hpp"

namespace szo {

// L(theta) = 1/2 theta^T A theta with A = diag(a), a linearly spaced from 1 to
// the condition number. One layer named "theta"; batches are ignored.
template <Real T>
class QuadraticTask final : public Task<T> {
 public:
  QuadraticTask(std::size_t d, double condition_number,
                std::vector<double> theta0 = {})
      : cond_(condition_number) {
    if (d < 1) throw ConfigError("quadratic dimension must be at least 1");
    if (!(condition_number >= 1.0)) {
      throw ConfigError("condition number must be at least 1");
    }
    eig_.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      eig_[i] = d == 1 ? 1.0
                       : 1.0 + (condition_number - 1.0) * static_cast<double>(i) /
                                   static_cast<double>(d - 1);
    }
    if (theta0.empty()) theta0.assign(d, 1.0 / std::sqrt(static_cast<double>(d)));
    if (theta0.size() != d) throw StructuralError("theta0 has the wrong length");
    std::vector<T> init(theta0.begin(), theta0.end());
    initial_.add_layer("theta", {d}, std::move(init));
  }

  std::string name() const override { return "quadratic"; }
  std::string describe() const override {
    return "quadratic dim=" + std::to_string(eig_.size()) +
           " condition=" + format_real(cond_);
  }
  const ParameterSet<T>& initial() const override { return initial_; }
  std::size_t split_size(Split) const override { return 1; }

  const std::vector<double>& eigenvalues() const noexcept { return eig_; }

  double loss(LayerSource<T>& src, const Batch&) const override {
    const auto theta = src.fetch(0);
    double sum = 0.0;
    for (std::size_t i = 0; i < eig_.size(); ++i) {
      const double v = theta[i];
      sum += eig_[i] * v * v;
    }
    return 0.5 * sum;
  }

  std::optional<double> smoothness() const override {
    return *std::max_element(eig_.begin(), eig_.end());
  }

  bool has_gradient() const override { return true; }
  std::vector<double> gradient(const ParameterSet<T>& p,
                               const Batch&) const override {
    const auto theta = p.layer(0).values();
    std::vector<double> g(eig_.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = eig_[i] * theta[i];
    return g;
  }

 private:
  double cond_;
  std::vector<double> eig_;
  ParameterSet<T> initial_;
};

template <Real T>
QuadraticTask<T> quadratic_task(std::size_t d, double condition_number) {
  return QuadraticTask<T>(d, condition_number);
}

}  // namespace szo
