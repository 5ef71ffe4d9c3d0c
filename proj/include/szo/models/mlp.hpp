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

#include "szo/models/task.hpp"
#include "szo/noise.hpp"

namespace szo {

enum class Activation { kTanh, kRelu };

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

struct ClassData {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> x;  // row-major n x dim
  std::vector<std::uint32_t> y;
};

namespace mlp_detail {

inline double activate(Activation a, double v) {
  return a == Activation::kTanh ? std::tanh(v) : std::max(v, 0.0);
}

// out[b][o] = sum_i w[o][i] * in[b][i] + bias[o]
template <typename W>
std::vector<double> affine(const std::vector<double>& in, std::size_t batch,
                           std::size_t fan_in, std::size_t fan_out,
                           std::span<const W> w) {
  std::vector<double> out(batch * fan_out, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = &in[b * fan_in];
    for (std::size_t o = 0; o < fan_out; ++o) {
      const W* row = &w[o * fan_in];
      double acc = 0.0;
      for (std::size_t i = 0; i < fan_in; ++i) acc += static_cast<double>(row[i]) * x[i];
      out[b * fan_out + o] = acc;
    }
  }
  return out;
}

inline double softmax_xent(const double* logits, std::size_t k, std::uint32_t label) {
  double mx = logits[0];
  for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, logits[c]);
  double s = 0.0;
  for (std::size_t c = 0; c < k; ++c) s += std::exp(logits[c] - mx);
  return mx + std::log(s) - logits[label];
}

inline std::size_t argmax(const double* v, std::size_t k) {
  return static_cast<std::size_t>(std::max_element(v, v + k) - v);
}

}  // namespace mlp_detail

// Fully connected classifier. Layers alternate "fcK.weight" [out, in] and
// "fcK.bias" [out]; hidden layers use the activation, the last is linear and
// feeds softmax cross-entropy.
template <Real T>
class MlpTask final : public Task<T> {
 public:
  MlpTask(std::vector<std::size_t> widths, Activation act, ClassData train,
          ClassData eval, std::uint64_t init_seed, std::string description)
      : widths_(std::move(widths)), act_(act), train_(std::move(train)),
        eval_(std::move(eval)), description_(std::move(description)) {
    if (widths_.size() < 2) throw ConfigError("an MLP needs at least two widths");
    for (std::size_t w : widths_) {
      if (w == 0) throw ConfigError("MLP widths must be positive");
    }
    if (train_.dim != widths_.front() || eval_.dim != widths_.front()) {
      throw StructuralError("MLP input width does not match the data");
    }
    if (train_.classes != widths_.back() || eval_.classes != widths_.back()) {
      throw StructuralError("MLP output width does not match the class count");
    }
    for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
      const std::size_t in = widths_[k], out = widths_[k + 1];
      NoiseStream s(hash_pair(hash_pair(init_seed, kInitDomain), k));
      std::vector<T> w(in * out);
      const double scale = 1.0 / std::sqrt(static_cast<double>(in));
      for (auto& v : w) v = static_cast<T>(scale * s.next_gaussian());
      initial_.add_layer("fc" + std::to_string(k) + ".weight", {out, in}, std::move(w));
      initial_.add_layer("fc" + std::to_string(k) + ".bias", {out});
    }
  }

  std::string name() const override { return "mlp"; }
  std::string describe() const override { return description_; }
  const ParameterSet<T>& initial() const override { return initial_; }
  void set_initial(ParameterSet<T> p) { initial_ = std::move(p); }
  std::size_t split_size(Split s) const override { return data(s).n; }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  const ClassData& data(Split s) const { return s == Split::kTrain ? train_ : eval_; }

  double loss(LayerSource<T>& src, const Batch& batch) const override {
    const auto logits = forward(src, batch);
    const auto& d = data(batch.split);
    const std::size_t k = widths_.back();
    double sum = 0.0;
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      sum += mlp_detail::softmax_xent(&logits[b * k], k, d.y[batch.indices[b]]);
    }
    return sum / static_cast<double>(batch.indices.size());
  }

  std::optional<double> accuracy(LayerSource<T>& src,
                                 const Batch& batch) const override {
    const auto logits = forward(src, batch);
    const auto& d = data(batch.split);
    const std::size_t k = widths_.back();
    std::size_t hit = 0;
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      hit += mlp_detail::argmax(&logits[b * k], k) == d.y[batch.indices[b]];
    }
    return static_cast<double>(hit) / static_cast<double>(batch.indices.size());
  }

  // Logits for a batch, consuming layers in order.
  std::vector<double> forward(LayerSource<T>& src, const Batch& batch) const {
    const auto& d = data(batch.split);
    const std::size_t n = batch.indices.size();
    std::vector<double> h(n * d.dim);
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(&d.x[batch.indices[b] * d.dim], d.dim, &h[b * d.dim]);
    }
    const std::size_t layers = widths_.size() - 1;
    for (std::size_t k = 0; k < layers; ++k) {
      const std::size_t in = widths_[k], out = widths_[k + 1];
      h = mlp_detail::affine(h, n, in, out, src.fetch(2 * k));
      const auto bias = src.fetch(2 * k + 1);
      const bool hidden = k + 1 < layers;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < out; ++o) {
          double& v = h[b * out + o];
          v += static_cast<double>(bias[o]);
          if (hidden) v = mlp_detail::activate(act_, v);
        }
      }
    }
    return h;
  }

 private:
  std::vector<std::size_t> widths_;
  Activation act_;
  ClassData train_;
  ClassData eval_;
  std::string description_;
  ParameterSet<T> initial_;
};

// Gaussian inputs labelled by the argmax of a random tanh teacher network of
// the same widths (weights N(0, 4 / fan_in)).
inline ClassData teacher_class_data(const std::vector<std::size_t>& widths,
                                    std::size_t n, std::uint64_t data_seed,
                                    std::uint64_t teacher_seed) {
  ClassData d;
  d.n = n;
  d.dim = widths.front();
  d.classes = widths.back();
  d.x.resize(n * d.dim);
  NoiseStream xs(hash_pair(data_seed, 0x78ull));
  for (double& v : d.x) v = xs.next_gaussian();
  std::vector<double> h = d.x;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::size_t in = widths[k], out = widths[k + 1];
    NoiseStream ws(hash_pair(teacher_seed, k));
    std::vector<double> w(in * out);
    const double scale = 2.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = scale * ws.next_gaussian();
    h = mlp_detail::affine(h, n, in, out, std::span<const double>(w));
    if (k + 2 < widths.size()) {
      for (double& v : h) v = std::tanh(v);
    }
  }
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.y[i] = static_cast<std::uint32_t>(mlp_detail::argmax(&h[i * d.classes], d.classes));
  }
  return d;
}

template <Real T>
MlpTask<T> mlp_task(std::vector<std::size_t> widths, Activation act,
                    std::size_t n_train, std::size_t n_eval, std::uint64_t seed) {
  const std::uint64_t teacher = hash_pair(seed, 0x7465ull);
  auto train = teacher_class_data(widths, n_train, hash_pair(seed, 1), teacher);
  auto eval = teacher_class_data(widths, n_eval, hash_pair(seed, 2), teacher);
  std::string desc = "mlp widths=";
  for (std::size_t i = 0; i < widths.size(); ++i) {
    desc += (i ? "," : "") + std::to_string(widths[i]);
  }
  desc += std::string(" activation=") + (act == Activation::kTanh ? "tanh" : "relu") +
          " train=" + std::to_string(n_train) + " eval=" + std::to_string(n_eval) +
          " seed=" + std::to_string(seed);
  return MlpTask<T>(std::move(widths), act, std::move(train), std::move(eval), seed,
                    std::move(desc));
}

}  // namespace szo
