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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/masking.hpp"
#include "szo/zo.hpp"

namespace szo {

// Config files hold one "key = value" per line; '#' starts a comment.
// Every key has a default, so an empty file is valid. Keys:
//
//   task               quadratic | logistic | mlp | transformer | shifted
//   task.dim           16      quadratic, logistic and shifted dimension
//   task.condition     1       quadratic condition number
//   task.n_train       1000    training examples (logistic, mlp, transformer)
//   task.n_eval        1000    evaluation examples
//   task.widths        32,32,32,32,32,32,32,32,32   mlp layer widths
//   task.activation    tanh    tanh | relu
//   task.d_model       16      transformer width
//   task.heads         2
//   task.seq_len       16
//   task.vocab         16
//   task.shift         1       shifted pair: 0 keeps task A, 1 flips the low group
//   task.seed          0       data and template seed (independent of run seeds)
//   optimizer          smezo   mezo | smezo | rmezo | fo-baseline
//   mask.variant       dynamic dynamic | constant (smezo only)
//   mask.select_large  false   select the largest weights instead (ablation)
//   mask.exclude       bias,norm   name substrings never masked
//   sparsity           0.75
//   epsilon            0.001
//   lr                 1e-06
//   lr_schedule        constant   constant | theory
//   steps              20000
//   eval_every         100
//   batch              16
//   seeds              0       comma-separated run seeds
//   dtype              f32     f32 | f64
//   mode               fused   fused | inplace | materialized
//   sparsify_interval  0       recalibrate thresholds every k steps; 0 = never
//   record_wallclock   false   fill steps.csv wallclock_us (breaks byte equality)
//   thresholds         (none)  threshold file written by `calibrate`
//   out                runs/default
using ConfigEntries = std::map<std::string, std::string>;

enum class Optimizer { kMezo, kSmezo, kRmezo, kFoBaseline };

inline std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::kMezo: return "mezo";
    case Optimizer::kSmezo: return "smezo";
    case Optimizer::kRmezo: return "rmezo";
    case Optimizer::kFoBaseline: return "fo-baseline";
  }
  return "?";
}

inline Optimizer parse_optimizer(const std::string& s) {
  if (s == "mezo") return Optimizer::kMezo;
  if (s == "smezo") return Optimizer::kSmezo;
  if (s == "rmezo") return Optimizer::kRmezo;
  if (s == "fo-baseline") return Optimizer::kFoBaseline;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct TaskSpec {
  std::string kind = "quadratic";
  std::size_t dim = 16;
  double condition = 1.0;
  std::size_t n_train = 1000;
  std::size_t n_eval = 1000;
  std::vector<std::size_t> widths{32, 32, 32, 32, 32, 32, 32, 32, 32};
  std::string activation = "tanh";
  std::size_t d_model = 16;
  std::size_t heads = 2;
  std::size_t seq_len = 16;
  std::size_t vocab = 16;
  double shift = 1.0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  TaskSpec task;
  Optimizer optimizer = Optimizer::kSmezo;
  std::string mask_variant = "dynamic";
  bool select_large = false;
  std::vector<std::string> exclude{"bias", "norm"};
  double sparsity = 0.75;
  double epsilon = 1e-3;
  double lr = 1e-6;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::size_t steps = 20000;
  std::size_t eval_every = 100;
  std::size_t batch = 16;
  std::vector<std::uint64_t> seeds{0};
  std::string dtype = "f32";
  EvalMode mode = EvalMode::kFused;
  std::size_t sparsify_interval = 0;
  bool record_wallclock = false;
  std::string thresholds;
  std::filesystem::path out = "runs/default";
  // Not serialized; set by the verification suite only.
  FaultInjection faults;

  void validate() const {
    static const std::vector<std::string> kinds{"quadratic", "logistic", "mlp",
                                                "transformer", "shifted"};
    if (std::find(kinds.begin(), kinds.end(), task.kind) == kinds.end()) {
      throw ConfigError("unknown task '" + task.kind + "'");
    }
    if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (batch < 1) throw ConfigError("batch must be at least 1");
    if (dtype != "f32" && dtype != "f64") throw ConfigError("dtype must be f32 or f64");
    if (mask_variant != "dynamic" && mask_variant != "constant") {
      throw ConfigError("mask.variant must be dynamic or constant");
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (lr_schedule == LrSchedule::kConstant && !(lr > 0.0)) {
      throw ConfigError("lr must be positive");
    }
    policy().validate();
  }

  MaskPolicy policy() const {
    MaskPolicy p;
    switch (optimizer) {
      case Optimizer::kMezo:
      case Optimizer::kFoBaseline:
        p = MaskPolicy::dense();
        break;
      case Optimizer::kSmezo:
        p = MaskPolicy::magnitude(sparsity);
        if (mask_variant == "constant") p.kind = MaskKind::kMagnitudeConstant;
        break;
      case Optimizer::kRmezo:
        p = MaskPolicy::random(sparsity);
        break;
    }
    p.select_large = select_large;
    p.exclude_patterns = exclude;
    return p;
  }

  // ZoConfig for one run; smoothness is filled in by the caller when the
  // theory schedule needs it.
  ZoConfig zo_config(std::uint64_t seed) const {
    ZoConfig c;
    c.epsilon = epsilon;
    c.lr = lr;
    c.policy = policy();
    c.base_seed = seed;
    c.steps = std::max<std::size_t>(steps, 1);
    c.lr_schedule = lr_schedule;
    c.mode = mode;
    c.sparsify_interval = sparsify_interval;
    c.record_wallclock = record_wallclock;
    c.faults = faults;
    return c;
  }

  std::string label() const {
    std::string l = to_string(optimizer);
    if (optimizer == Optimizer::kSmezo || optimizer == Optimizer::kRmezo) {
      l += "-r" + format_real(sparsity);
      if (optimizer == Optimizer::kSmezo && mask_variant == "constant") l += "-const";
      if (select_large) l += "-large";
    }
    return l;
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    return parse_real(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_same_v<T, std::string>) {
      s += xs[i];
    } else {
      s += std::to_string(xs[i]);
    }
  }
  return s;
}

}  // namespace config_detail

inline ConfigEntries parse_config_text(const std::string& text,
                                       const std::string& origin = "<config>") {
  ConfigEntries out;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out[config_detail::trim(line.substr(0, eq))] = config_detail::trim(line.substr(eq + 1));
  }
  return out;
}

inline ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

// Applies entries on top of `cfg`; unknown keys are errors.
inline void apply_entries(ExperimentConfig& cfg, const ConfigEntries& entries) {
  using namespace config_detail;
  for (const auto& [key, v] : entries) {
    if (key == "task") cfg.task.kind = v;
    else if (key == "task.dim") cfg.task.dim = to_u64(key, v);
    else if (key == "task.condition") cfg.task.condition = to_real(key, v);
    else if (key == "task.n_train") cfg.task.n_train = to_u64(key, v);
    else if (key == "task.n_eval") cfg.task.n_eval = to_u64(key, v);
    else if (key == "task.widths") {
      cfg.task.widths.clear();
      for (const auto& w : split_list(v)) cfg.task.widths.push_back(to_u64(key, w));
    }
    else if (key == "task.activation") cfg.task.activation = v;
    else if (key == "task.d_model") cfg.task.d_model = to_u64(key, v);
    else if (key == "task.heads") cfg.task.heads = to_u64(key, v);
    else if (key == "task.seq_len") cfg.task.seq_len = to_u64(key, v);
    else if (key == "task.vocab") cfg.task.vocab = to_u64(key, v);
    else if (key == "task.shift") cfg.task.shift = to_real(key, v);
    else if (key == "task.seed") cfg.task.seed = to_u64(key, v);
    else if (key == "optimizer") cfg.optimizer = parse_optimizer(v);
    else if (key == "mask.variant") cfg.mask_variant = v;
    else if (key == "mask.select_large") cfg.select_large = to_bool(key, v);
    else if (key == "mask.exclude") cfg.exclude = split_list(v);
    else if (key == "sparsity") cfg.sparsity = to_real(key, v);
    else if (key == "epsilon") cfg.epsilon = to_real(key, v);
    else if (key == "lr") cfg.lr = to_real(key, v);
    else if (key == "lr_schedule") {
      if (v == "constant") cfg.lr_schedule = LrSchedule::kConstant;
      else if (v == "theory") cfg.lr_schedule = LrSchedule::kTheory;
      else throw ConfigError("lr_schedule must be constant or theory, got '" + v + "'");
    }
    else if (key == "steps") cfg.steps = to_u64(key, v);
    else if (key == "eval_every") cfg.eval_every = to_u64(key, v);
    else if (key == "batch") cfg.batch = to_u64(key, v);
    else if (key == "seeds") {
      cfg.seeds.clear();
      for (const auto& s : split_list(v)) cfg.seeds.push_back(to_u64(key, s));
    }
    else if (key == "dtype") cfg.dtype = v;
    else if (key == "mode") {
      if (v == "fused") cfg.mode = EvalMode::kFused;
      else if (v == "inplace") cfg.mode = EvalMode::kInPlace;
      else if (v == "materialized") cfg.mode = EvalMode::kMaterialized;
      else throw ConfigError("mode must be fused, inplace or materialized, got '" + v + "'");
    }
    else if (key == "sparsify_interval") cfg.sparsify_interval = to_u64(key, v);
    else if (key == "record_wallclock") cfg.record_wallclock = to_bool(key, v);
    else if (key == "thresholds") cfg.thresholds = v;
    else if (key == "out") cfg.out = v;
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

// Canonical serialization, one line per key in a fixed order. Reading it
// back yields an equal config.
inline std::string echo_config(const ExperimentConfig& c) {
  using config_detail::join;
  std::vector<std::pair<std::string, std::string>> kv{
      {"task", c.task.kind},
      {"task.dim", std::to_string(c.task.dim)},
      {"task.condition", format_real(c.task.condition)},
      {"task.n_train", std::to_string(c.task.n_train)},
      {"task.n_eval", std::to_string(c.task.n_eval)},
      {"task.widths", join(c.task.widths)},
      {"task.activation", c.task.activation},
      {"task.d_model", std::to_string(c.task.d_model)},
      {"task.heads", std::to_string(c.task.heads)},
      {"task.seq_len", std::to_string(c.task.seq_len)},
      {"task.vocab", std::to_string(c.task.vocab)},
      {"task.shift", format_real(c.task.shift)},
      {"task.seed", std::to_string(c.task.seed)},
      {"optimizer", to_string(c.optimizer)},
      {"mask.variant", c.mask_variant},
      {"mask.select_large", c.select_large ? "true" : "false"},
      {"mask.exclude", join(c.exclude)},
      {"sparsity", format_real(c.sparsity)},
      {"epsilon", format_real(c.epsilon)},
      {"lr", format_real(c.lr)},
      {"lr_schedule", to_string(c.lr_schedule)},
      {"steps", std::to_string(c.steps)},
      {"eval_every", std::to_string(c.eval_every)},
      {"batch", std::to_string(c.batch)},
      {"seeds", join(c.seeds)},
      {"dtype", c.dtype},
      {"mode", to_string(c.mode)},
      {"sparsify_interval", std::to_string(c.sparsify_interval)},
      {"record_wallclock", c.record_wallclock ? "true" : "false"},
      {"out", c.out.string()},
  };
  if (!c.thresholds.empty()) kv.emplace_back("thresholds", c.thresholds);
  std::string s;
  for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
  return s;
}

// defaults <- file <- overrides
inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                                    const ConfigEntries& overrides) {
  ExperimentConfig cfg;
  if (file) apply_entries(cfg, read_config_file(*file));
  apply_entries(cfg, overrides);
  cfg.validate();
  return cfg;
}

}  // namespace szo
