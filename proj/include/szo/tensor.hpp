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

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstring>
#include <functional>
#include <iterator>
#include <numeric>
#include <ranges>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "szo/error.hpp"

namespace szo {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

enum class ElementType : std::uint8_t { kF32 = 1, kF64 = 2 };

template <Real T>
constexpr ElementType element_type_of() {
  return std::same_as<T, float> ? ElementType::kF32 : ElementType::kF64;
}

inline std::string to_string(ElementType t) {
  return t == ElementType::kF32 ? "f32" : "f64";
}

inline std::size_t element_count(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// One named, row-major block of parameters.
template <Real T>
class LayerTensor {
 public:
  LayerTensor(std::size_t layer_id, std::string name,
              std::vector<std::size_t> shape, std::vector<T> values)
      : layer_id_(layer_id),
        name_(std::move(name)),
        shape_(std::move(shape)),
        values_(std::move(values)) {
    if (shape_.empty()) {
      throw StructuralError("layer '" + name_ + "' has rank 0");
    }
    for (std::size_t extent : shape_) {
      if (extent == 0) {
        throw StructuralError("layer '" + name_ + "' has a zero extent");
      }
    }
    if (element_count(shape_) != values_.size()) {
      throw StructuralError("layer '" + name_ + "': shape holds " +
                            std::to_string(element_count(shape_)) +
                            " elements but " + std::to_string(values_.size()) +
                            " values were given");
    }
  }

  LayerTensor(std::size_t layer_id, std::string name,
              std::vector<std::size_t> shape)
      : LayerTensor(layer_id, std::move(name), shape,
                    std::vector<T>(element_count(shape), T{0})) {}

  std::size_t layer_id() const noexcept { return layer_id_; }
  const std::string& name() const noexcept { return name_; }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const LayerTensor&, const LayerTensor&) = default;

 private:
  std::size_t layer_id_;
  std::string name_;
  std::vector<std::size_t> shape_;
  std::vector<T> values_;
};

struct FlatEntry {
  std::size_t layer_id;
  std::size_t element_index;
  double value;

  friend bool operator==(const FlatEntry&, const FlatEntry&) = default;
};

template <Real T>
class ParameterSet;

// Layer-major, then element-index iteration over a ParameterSet.
template <Real T>
class FlatView {
 public:
  class iterator {
   public:
    using iterator_category = std::forward_iterator_tag;
    using value_type = FlatEntry;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(const ParameterSet<T>* p, std::size_t layer, std::size_t index)
        : p_(p), layer_(layer), index_(index) {
      skip_exhausted();
    }

    FlatEntry operator*() const {
      return {layer_, index_, static_cast<double>(p_->layer(layer_)[index_])};
    }
    iterator& operator++() {
      ++index_;
      skip_exhausted();
      return *this;
    }
    iterator operator++(int) {
      iterator copy = *this;
      ++*this;
      return copy;
    }
    friend bool operator==(const iterator& a, const iterator& b) {
      return a.layer_ == b.layer_ && a.index_ == b.index_;
    }

   private:
    void skip_exhausted() {
      while (p_ != nullptr && layer_ < p_->num_layers() &&
             index_ >= p_->layer(layer_).size()) {
        ++layer_;
        index_ = 0;
      }
    }

    const ParameterSet<T>* p_ = nullptr;
    std::size_t layer_ = 0;
    std::size_t index_ = 0;
  };

  explicit FlatView(const ParameterSet<T>& p) : p_(&p) {}

  iterator begin() const { return iterator(p_, 0, 0); }
  iterator end() const { return iterator(p_, p_->num_layers(), 0); }

 private:
  const ParameterSet<T>* p_;
};

// Ordered collection of layers; the optimizer state.
template <Real T>
class ParameterSet {
 public:
  using value_type = T;

  ParameterSet() = default;

  // Appends a layer; its id is the next dense ordinal.
  LayerTensor<T>& add_layer(std::string name, std::vector<std::size_t> shape,
                            std::vector<T> values) {
    layers_.emplace_back(layers_.size(), std::move(name), std::move(shape),
                         std::move(values));
    total_ += layers_.back().size();
    return layers_.back();
  }

  LayerTensor<T>& add_layer(std::string name, std::vector<std::size_t> shape) {
    std::vector<T> zeros(element_count(shape), T{0});
    return add_layer(std::move(name), std::move(shape), std::move(zeros));
  }

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t total_params() const noexcept { return total_; }

  std::size_t max_layer_size() const noexcept {
    std::size_t m = 0;
    for (const auto& l : layers_) m = std::max(m, l.size());
    return m;
  }

  LayerTensor<T>& layer(std::size_t id) { return layers_.at(id); }
  const LayerTensor<T>& layer(std::size_t id) const { return layers_.at(id); }

  std::span<LayerTensor<T>> layers() noexcept { return layers_; }
  std::span<const LayerTensor<T>> layers() const noexcept { return layers_; }

  // Index of the layer with the given name; throws if absent.
  std::size_t find(const std::string& name) const {
    for (const auto& l : layers_) {
      if (l.name() == name) return l.layer_id();
    }
    throw StructuralError("no layer named '" + name + "'");
  }

  std::vector<T> flatten() const {
    std::vector<T> out;
    out.reserve(total_);
    for (const auto& l : layers_) {
      out.insert(out.end(), l.values().begin(), l.values().end());
    }
    return out;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      for (T v : l.values()) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<LayerTensor<T>> layers_;
  std::size_t total_ = 0;
};

template <Real T>
FlatView<T> flat_view(const ParameterSet<T>& p) {
  return FlatView<T>(p);
}

// Same structure and the same bit pattern in every element (unlike ==,
// which treats -0 and 0 as equal).
template <Real T>
bool bitwise_equal(const ParameterSet<T>& a, const ParameterSet<T>& b) {
  if (a.num_layers() != b.num_layers()) return false;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const auto& x = a.layer(l);
    const auto& y = b.layer(l);
    if (x.name() != y.name() || x.shape() != y.shape()) return false;
    if (std::memcmp(x.values().data(), y.values().data(), x.size() * sizeof(T)) != 0) {
      return false;
    }
  }
  return true;
}

// p <- p + scale * src, element by element in flat order. Nothing is written
// unless every result is finite.
template <Real T, std::ranges::sized_range R>
void axpy_into(ParameterSet<T>& p, double scale, const R& src) {
  if (std::ranges::size(src) != p.total_params()) {
    throw StructuralError("axpy_into: source has " +
                          std::to_string(std::ranges::size(src)) +
                          " elements, parameter set has " +
                          std::to_string(p.total_params()));
  }
  if (scale == 0.0) return;
  auto it = std::ranges::begin(src);
  for (const auto& layer : p.layers()) {
    for (std::size_t i = 0; i < layer.size(); ++i, ++it) {
      const T next = layer[i] + static_cast<T>(scale * static_cast<double>(*it));
      if (!std::isfinite(next)) {
        throw NumericError("axpy_into: non-finite result in layer '" +
                           layer.name() + "' (id " +
                           std::to_string(layer.layer_id()) + ") at index " +
                           std::to_string(i));
      }
    }
  }
  it = std::ranges::begin(src);
  for (auto& layer : p.layers()) {
    for (T& v : layer.values()) {
      v = v + static_cast<T>(scale * static_cast<double>(*it));
      ++it;
    }
  }
}

}  // namespace szo
