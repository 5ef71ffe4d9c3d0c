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
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/noise.hpp"
#include "szo/tensor.hpp"

namespace szo {

enum class MaskKind { kMagnitudeDynamic, kMagnitudeConstant, kRandom, kDense };

inline std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::kMagnitudeDynamic: return "magnitude-dynamic";
    case MaskKind::kMagnitudeConstant: return "magnitude-constant";
    case MaskKind::kRandom: return "random";
    case MaskKind::kDense: return "dense";
  }
  return "?";
}

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "magnitude-dynamic" || s == "magnitude") return MaskKind::kMagnitudeDynamic;
  if (s == "magnitude-constant" || s == "constant") return MaskKind::kMagnitudeConstant;
  if (s == "random") return MaskKind::kRandom;
  if (s == "dense") return MaskKind::kDense;
  throw ConfigError("unknown mask kind '" + s + "'");
}

struct MaskPolicy {
  MaskKind kind = MaskKind::kDense;
  double sparsity = 0.0;
  // Layers whose name contains any of these substrings are never masked.
  std::vector<std::string> exclude_patterns = {"bias", "norm"};
  // Ablation switch: select |theta| > h instead of |theta| <= h.
  bool select_large = false;

  static MaskPolicy dense() { return {}; }
  static MaskPolicy magnitude(double r) {
    return {MaskKind::kMagnitudeDynamic, r};
  }
  static MaskPolicy random(double r) { return {MaskKind::kRandom, r}; }

  double effective_sparsity() const {
    return kind == MaskKind::kDense ? 0.0 : sparsity;
  }

  bool maskable(const std::string& layer_name) const {
    return std::none_of(exclude_patterns.begin(), exclude_patterns.end(),
                        [&](const std::string& pat) {
                          return layer_name.find(pat) != std::string::npos;
                        });
  }

  void validate() const {
    if (!(sparsity >= 0.0 && sparsity < 1.0)) {
      throw DomainError("sparsity must lie in [0, 1), got " +
                        std::to_string(sparsity));
    }
  }
};

struct ThresholdEntry {
  std::size_t layer_id;
  std::string name;
  double h;
  bool maskable;
};

struct ThresholdVector {
  std::vector<ThresholdEntry> per_layer;
  double sparsity = 0.0;

  double at(std::size_t layer_id) const { return per_layer.at(layer_id).h; }
};

// Magnitude rule for one element. Ties at h are selected.
inline bool magnitude_selects(double value, double h, bool select_large) {
  const double mag = std::fabs(value);
  return select_large ? mag > h : mag <= h;
}

namespace masking_detail {

// q-quantile of |values| with lower interpolation: sorted[floor(q * (n - 1))].
template <Real T>
double abs_quantile_lower(std::span<const T> values, double q) {
  if (values.empty()) throw StructuralError("quantile of an empty layer");
  std::vector<double> mags(values.size());
  std::transform(values.begin(), values.end(), mags.begin(),
                 [](T v) { return std::fabs(static_cast<double>(v)); });
  const auto k = static_cast<std::size_t>(
      std::floor(q * static_cast<double>(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k),
                   mags.end());
  return mags[k];
}

}  // namespace masking_detail

// Per-layer magnitude thresholds. For the default (small-weight) selection
// h is the (1 - r)-quantile of |theta|; with select_large it is the
// r-quantile and selection keeps magnitudes strictly above it. Layers the
// policy does not mask get h = +inf.
template <Real T>
ThresholdVector calibrate_thresholds(const ParameterSet<T>& p, double sparsity,
                                     const MaskPolicy& policy) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw DomainError("sparsity must lie in [0, 1)");
  }
  ThresholdVector out;
  out.sparsity = sparsity;
  for (const auto& layer : p.layers()) {
    if (layer.size() == 0) {
      throw StructuralError("layer '" + layer.name() + "' is empty");
    }
    const bool maskable = policy.maskable(layer.name());
    double h = std::numeric_limits<double>::infinity();
    if (maskable) {
      const double q = policy.select_large ? sparsity : 1.0 - sparsity;
      h = masking_detail::abs_quantile_lower(layer.values(), q);
    }
    out.per_layer.push_back({layer.layer_id(), layer.name(), h, maskable});
  }
  return out;
}

template <Real T>
std::vector<std::uint8_t> get_mask(const LayerTensor<T>& layer, double h,
                                   bool select_large = false) {
  if (h < 0.0) throw DomainError("threshold must be non-negative");
  std::vector<std::uint8_t> mask(layer.size());
  for (std::size_t i = 0; i < layer.size(); ++i) {
    mask[i] = magnitude_selects(layer[i], h, select_large) ? 1 : 0;
  }
  return mask;
}

// Each entry is 1 with probability 1 - r, decided by the stream's uniforms
// starting at its cursor.
inline std::vector<std::uint8_t> random_mask(std::size_t n, double sparsity,
                                             NoiseStream stream) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) {
    throw DomainError("sparsity must lie in [0, 1)");
  }
  const double keep = 1.0 - sparsity;
  std::vector<std::uint8_t> mask(n);
  for (auto& m : mask) m = stream.next_uniform() < keep ? 1 : 0;
  return mask;
}

struct SparseMask {
  std::vector<std::vector<std::uint8_t>> per_layer;

  std::size_t d_hat() const {
    std::size_t n = 0;
    for (const auto& l : per_layer) {
      n += static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
    }
    return n;
  }
};

inline std::size_t count_selected(const SparseMask& mask) { return mask.d_hat(); }

// Element-wise mask for one layer at one step. Evaluated on the fly so that
// the dynamic path never stores a mask.
class LayerSelector {
 public:
  enum class Mode { kAll, kMagnitude, kRandom, kStored };

  static LayerSelector all() { return LayerSelector(Mode::kAll); }
  static LayerSelector magnitude(double h, bool select_large) {
    LayerSelector s(Mode::kMagnitude);
    s.h_ = h;
    s.select_large_ = select_large;
    return s;
  }
  static LayerSelector random(double keep, NoiseStream stream) {
    LayerSelector s(Mode::kRandom);
    s.keep_ = keep;
    s.stream_ = stream;
    return s;
  }
  static LayerSelector stored(std::span<const std::uint8_t> bits) {
    LayerSelector s(Mode::kStored);
    s.stored_ = bits;
    return s;
  }

  Mode mode() const noexcept { return mode_; }

  bool operator()(std::size_t i, double value) const {
    switch (mode_) {
      case Mode::kAll: return true;
      case Mode::kMagnitude: return magnitude_selects(value, h_, select_large_);
      case Mode::kRandom: return stream_.uniform_at(i) < keep_;
      case Mode::kStored: return stored_[i] != 0;
    }
    return false;
  }

 private:
  explicit LayerSelector(Mode m) : mode_(m) {}

  Mode mode_;
  double h_ = 0.0;
  bool select_large_ = false;
  double keep_ = 1.0;
  NoiseStream stream_{0};
  std::span<const std::uint8_t> stored_;
};

// Owns the mask state of a run: policy, thresholds, and for the constant
// variant the mask fixed before training.
template <Real T>
class Masker {
 public:
  Masker() = default;

  Masker(const ParameterSet<T>& initial, MaskPolicy policy)
      : policy_(std::move(policy)) {
    policy_.validate();
    recalibrate(initial);
  }

  const MaskPolicy& policy() const noexcept { return policy_; }
  const ThresholdVector& thresholds() const noexcept { return thresholds_; }

  // Installs externally calibrated thresholds; layer names must match p.
  void set_thresholds(ThresholdVector t, const ParameterSet<T>& p) {
    if (t.per_layer.size() != p.num_layers()) {
      throw StructuralError("threshold file has " + std::to_string(t.per_layer.size()) +
                            " layers, parameters have " + std::to_string(p.num_layers()));
    }
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      auto& e = t.per_layer[l];
      if (e.name != p.layer(l).name()) {
        throw StructuralError("threshold layer " + std::to_string(l) + " is '" + e.name +
                              "', expected '" + p.layer(l).name() + "'");
      }
      e.layer_id = l;
      e.maskable = policy_.maskable(e.name) && std::isfinite(e.h);
    }
    thresholds_ = std::move(t);
    if (policy_.kind == MaskKind::kMagnitudeConstant && !fixed_) rebuild_constant(p);
  }

  // Pins the mask of every maskable layer to `mask` for all later steps.
  void fix_mask(SparseMask mask) {
    constant_ = std::move(mask);
    fixed_ = true;
  }

  void recalibrate(const ParameterSet<T>& p) {
    thresholds_ = calibrate_thresholds(p, policy_.effective_sparsity(), policy_);
    if (policy_.kind == MaskKind::kMagnitudeConstant && !fixed_) rebuild_constant(p);
  }

  LayerSelector selector(std::size_t layer_id, std::uint64_t step_seed) const {
    const auto& entry = thresholds_.per_layer.at(layer_id);
    if (!entry.maskable) return LayerSelector::all();
    if (fixed_) return LayerSelector::stored(constant_.per_layer.at(layer_id));
    if (policy_.kind == MaskKind::kDense) return LayerSelector::all();
    switch (policy_.kind) {
      case MaskKind::kMagnitudeDynamic:
        return LayerSelector::magnitude(entry.h, policy_.select_large);
      case MaskKind::kMagnitudeConstant:
        return LayerSelector::stored(constant_.per_layer.at(layer_id));
      case MaskKind::kRandom:
        return LayerSelector::random(
            1.0 - policy_.sparsity,
            derive_substream(hash_pair(step_seed, kRandomMaskDomain), layer_id));
      case MaskKind::kDense: break;
    }
    return LayerSelector::all();
  }

  // Full mask for the given parameters; reference paths and tests only.
  SparseMask materialize(const ParameterSet<T>& p, std::uint64_t step_seed) const {
    SparseMask m;
    for (const auto& layer : p.layers()) {
      const auto sel = selector(layer.layer_id(), step_seed);
      std::vector<std::uint8_t> bits(layer.size());
      for (std::size_t i = 0; i < layer.size(); ++i) {
        bits[i] = sel(i, static_cast<double>(layer[i])) ? 1 : 0;
      }
      m.per_layer.push_back(std::move(bits));
    }
    return m;
  }

 private:
  void rebuild_constant(const ParameterSet<T>& p) {
    constant_.per_layer.clear();
    for (const auto& layer : p.layers()) {
      constant_.per_layer.push_back(
          get_mask(layer, thresholds_.at(layer.layer_id()), policy_.select_large));
    }
  }

  MaskPolicy policy_;
  ThresholdVector thresholds_;
  SparseMask constant_;
  bool fixed_ = false;
};

// Audit format: one "layer_name = h" line per layer, preceded by comments.
inline void write_thresholds(const ThresholdVector& t,
                             const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << "# per-layer magnitude thresholds\n";
  f << "# sparsity = " << format_real(t.sparsity) << "\n";
  for (const auto& e : t.per_layer) {
    f << e.name << " = " << format_real(e.h) << "\n";
  }
}

inline ThresholdVector read_thresholds(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  ThresholdVector t;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("# sparsity = ", 0) == 0) {
      t.sparsity = parse_real(line.substr(13));
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw IoError("malformed threshold line: '" + line + "'");
    }
    const std::string value = line.substr(eq + 3);
    double h = 0.0;
    try {
      h = parse_real(value);
    } catch (const std::invalid_argument&) {
      throw IoError("malformed threshold value: '" + line + "'");
    }
    t.per_layer.push_back({t.per_layer.size(), line.substr(0, eq), h,
                           std::isfinite(h)});
  }
  return t;
}

}  // namespace szo
