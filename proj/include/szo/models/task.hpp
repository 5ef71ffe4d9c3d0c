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
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "szo/error.hpp"
#include "szo/noise.hpp"
#include "szo/tensor.hpp"

namespace szo {

// Supplies layer parameters to a forward pass. Models fetch every layer
// exactly once per evaluation, in increasing layer_id order; a returned span
// is only valid until the next fetch.
template <Real T>
class LayerSource {
 public:
  virtual ~LayerSource() = default;
  virtual std::span<const T> fetch(std::size_t layer_id) = 0;
};

// Reads straight from a parameter set.
template <Real T>
class DirectSource final : public LayerSource<T> {
 public:
  explicit DirectSource(const ParameterSet<T>& p) : p_(p) {}
  std::span<const T> fetch(std::size_t layer_id) override {
    return p_.layer(layer_id).values();
  }

 private:
  const ParameterSet<T>& p_;
};

enum class Split { kTrain, kEval };

struct Batch {
  Split split = Split::kTrain;
  std::vector<std::size_t> indices;
};

// Deterministic minibatch of `size` distinct indices from [0, n), keyed by
// (seed, step). Partial Fisher-Yates driven by a counter-based stream.
inline Batch sample_minibatch(std::size_t n, std::size_t size,
                              std::uint64_t seed, std::uint64_t step) {
  Batch b;
  b.indices.resize(n);
  std::iota(b.indices.begin(), b.indices.end(), std::size_t{0});
  if (size >= n) return b;
  NoiseStream s(hash_pair(hash_pair(seed, kMinibatchDomain), step));
  for (std::size_t i = 0; i < size; ++i) {
    const auto span = static_cast<double>(n - i);
    auto j = i + static_cast<std::size_t>(s.next_uniform() * span);
    j = std::min(j, n - 1);
    std::swap(b.indices[i], b.indices[j]);
  }
  b.indices.resize(size);
  return b;
}

// A forward-only loss over a layered parameter set and a synthetic dataset.
template <Real T>
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  // Generator parameters sufficient to rebuild the dataset.
  virtual std::string describe() const = 0;
  // Starting parameters for optimization.
  virtual const ParameterSet<T>& initial() const = 0;
  virtual std::size_t split_size(Split s) const = 0;

  // Mean loss over the batch.
  virtual double loss(LayerSource<T>& src, const Batch& batch) const = 0;

  virtual std::optional<double> accuracy(LayerSource<T>&, const Batch&) const {
    return std::nullopt;
  }
  // Gradient Lipschitz constant, when known.
  virtual std::optional<double> smoothness() const { return std::nullopt; }

  virtual bool has_gradient() const { return false; }
  virtual std::vector<double> gradient(const ParameterSet<T>&,
                                       const Batch&) const {
    throw StateError(name() + " has no analytic gradient");
  }

  Batch full(Split s) const {
    Batch b{s, std::vector<std::size_t>(split_size(s))};
    std::iota(b.indices.begin(), b.indices.end(), std::size_t{0});
    return b;
  }

  double evaluate(const ParameterSet<T>& p, const Batch& batch) const {
    DirectSource<T> src(p);
    return loss(src, batch);
  }
  std::optional<double> evaluate_accuracy(const ParameterSet<T>& p,
                                          const Batch& batch) const {
    DirectSource<T> src(p);
    return accuracy(src, batch);
  }
};

template <Real T>
using LossFn = std::function<double(const ParameterSet<T>&)>;

template <Real T>
LossFn<T> bind_loss(const Task<T>& task, Batch batch) {
  return [&task, b = std::move(batch)](const ParameterSet<T>& p) {
    return task.evaluate(p, b);
  };
}

}  // namespace szo
