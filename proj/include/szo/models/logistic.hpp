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
#include <string>
#include <vector>

#include "szo/format.hpp"
#include "szo/models/task.hpp"
#include "szo/noise.hpp"

namespace szo {

struct BinaryData {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> x;  // row-major n x dim
  std::vector<std::uint8_t> y;
};

// Synthetic linear-teacher data: x_j = scale_j * N(0, 1), label from the
// teacher logit w.x + b, either thresholded (with a flip probability) or
// drawn as Bernoulli(sigmoid(logit)).
struct LinearTeacher {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> feature_scales;  // empty: all ones
  double flip_prob = 0.0;
  bool bernoulli = false;

  BinaryData sample(std::size_t n, std::uint64_t seed) const {
    BinaryData data;
    data.n = n;
    data.dim = weights.size();
    data.x.resize(n * data.dim);
    data.y.resize(n);
    NoiseStream features(hash_pair(seed, 0x66656174ull));
    NoiseStream labels(hash_pair(seed, 0x6c61626cull));
    for (std::size_t i = 0; i < n; ++i) {
      double logit = bias;
      for (std::size_t j = 0; j < data.dim; ++j) {
        const double scale = feature_scales.empty() ? 1.0 : feature_scales[j];
        const double v = scale * features.next_gaussian();
        data.x[i * data.dim + j] = v;
        logit += weights[j] * v;
      }
      const double u = labels.next_uniform();
      bool label = false;
      if (bernoulli) {
        label = u < 1.0 / (1.0 + std::exp(-logit));
      } else {
        label = (logit > 0.0) != (u < flip_prob);
      }
      data.y[i] = label ? 1 : 0;
    }
    return data;
  }
};

// Binary cross-entropy of a linear classifier. Layers: "weight" [dim],
// "bias" [1].
template <Real T>
class LogisticTask final : public Task<T> {
 public:
  LogisticTask(BinaryData train, BinaryData eval, std::string description,
               ParameterSet<T> initial = {})
      : train_(std::move(train)), eval_(std::move(eval)),
        description_(std::move(description)), initial_(std::move(initial)) {
    if (train_.dim == 0 || train_.dim != eval_.dim) {
      throw StructuralError("logistic train/eval feature dimensions differ");
    }
    if (initial_.num_layers() == 0) {
      initial_.add_layer("weight", {train_.dim});
      initial_.add_layer("bias", {1});
    }
    if (initial_.num_layers() != 2 || initial_.layer(0).size() != train_.dim ||
        initial_.layer(1).size() != 1) {
      throw StructuralError("logistic parameters must be weight[dim], bias[1]");
    }
    smoothness_ = estimate_smoothness();
  }

  std::string name() const override { return "logistic"; }
  std::string describe() const override { return description_; }
  const ParameterSet<T>& initial() const override { return initial_; }
  void set_initial(ParameterSet<T> p) { initial_ = std::move(p); }

  std::size_t split_size(Split s) const override { return data(s).n; }
  std::size_t dim() const noexcept { return train_.dim; }
  const BinaryData& data(Split s) const { return s == Split::kTrain ? train_ : eval_; }

  double loss(LayerSource<T>& src, const Batch& batch) const override {
    const auto logits = compute_logits(src, batch);
    const auto& d = data(batch.split);
    double sum = 0.0;
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
      const double z = logits[k];
      const double y = d.y[batch.indices[k]];
      // log(1 + e^z) - y z, stable for large |z|
      sum += std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))) - y * z;
    }
    return sum / static_cast<double>(batch.indices.size());
  }

  std::optional<double> accuracy(LayerSource<T>& src,
                                 const Batch& batch) const override {
    const auto logits = compute_logits(src, batch);
    const auto& d = data(batch.split);
    std::size_t hit = 0;
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
      hit += (logits[k] > 0.0) == (d.y[batch.indices[k]] != 0);
    }
    return static_cast<double>(hit) / static_cast<double>(batch.indices.size());
  }

  // Largest eigenvalue of E[[x;1][x;1]^T] / 4 on the training split.
  std::optional<double> smoothness() const override { return smoothness_; }

  bool has_gradient() const override { return true; }
  std::vector<double> gradient(const ParameterSet<T>& p,
                               const Batch& batch) const override {
    DirectSource<T> src(p);
    const auto logits = compute_logits(src, batch);
    const auto& d = data(batch.split);
    std::vector<double> g(d.dim + 1, 0.0);
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
      const std::size_t i = batch.indices[k];
      const double r = 1.0 / (1.0 + std::exp(-logits[k])) - d.y[i];
      for (std::size_t j = 0; j < d.dim; ++j) g[j] += r * d.x[i * d.dim + j];
      g[d.dim] += r;
    }
    for (double& v : g) v /= static_cast<double>(batch.indices.size());
    return g;
  }

  LogisticTask with_flipped_labels() const {
    BinaryData tr = train_, ev = eval_;
    for (auto& y : tr.y) y = 1 - y;
    for (auto& y : ev.y) y = 1 - y;
    return LogisticTask(std::move(tr), std::move(ev), description_ + " flipped",
                        initial_);
  }

 private:
  std::vector<double> compute_logits(LayerSource<T>& src, const Batch& batch) const {
    const auto& d = data(batch.split);
    const auto w = src.fetch(0);
    std::vector<double> logits(batch.indices.size(), 0.0);
    for (std::size_t k = 0; k < batch.indices.size(); ++k) {
      const double* row = &d.x[batch.indices[k] * d.dim];
      double z = 0.0;
      for (std::size_t j = 0; j < d.dim; ++j) z += static_cast<double>(w[j]) * row[j];
      logits[k] = z;
    }
    const double b = src.fetch(1)[0];
    for (double& z : logits) z += b;
    return logits;
  }

  double estimate_smoothness() const {
    const std::size_t m = train_.dim + 1;
    std::vector<double> v(m, 1.0 / std::sqrt(static_cast<double>(m)));
    double lambda = 0.0;
    for (int iter = 0; iter < 500; ++iter) {
      std::vector<double> next(m, 0.0);
      for (std::size_t i = 0; i < train_.n; ++i) {
        const double* row = &train_.x[i * train_.dim];
        double dot = v[train_.dim];
        for (std::size_t j = 0; j < train_.dim; ++j) dot += row[j] * v[j];
        for (std::size_t j = 0; j < train_.dim; ++j) next[j] += dot * row[j];
        next[train_.dim] += dot;
      }
      double norm = 0.0;
      for (double& x : next) {
        x /= static_cast<double>(train_.n);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) break;
      lambda = norm;
      for (std::size_t j = 0; j < m; ++j) v[j] = next[j] / norm;
    }
    return lambda / 4.0;
  }

  BinaryData train_;
  BinaryData eval_;
  std::string description_;
  ParameterSet<T> initial_;
  double smoothness_ = 0.0;
};

// Teacher weights N(0, 1); labels thresholded with 2% flips. Train and eval
// splits both hold n_samples examples.
template <Real T>
LogisticTask<T> logistic_task(std::size_t n_samples, std::size_t d,
                              std::uint64_t seed, double flip_prob = 0.02) {
  LinearTeacher teacher;
  NoiseStream w(hash_pair(seed, 0x74656163ull));
  teacher.weights = w.gaussian_fill(d);
  teacher.flip_prob = flip_prob;
  const std::string desc = "logistic samples=" + std::to_string(n_samples) +
                           " dim=" + std::to_string(d) + " seed=" +
                           std::to_string(seed) + " flip=" + format_real(flip_prob);
  return LogisticTask<T>(teacher.sample(n_samples, hash_pair(seed, 1)),
                         teacher.sample(n_samples, hash_pair(seed, 2)), desc);
}

}  // namespace szo
