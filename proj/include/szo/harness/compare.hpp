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
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/harness/config.hpp"
#include "szo/harness/run.hpp"

namespace szo {

enum class TargetMetric { kEvalLoss, kGradNormSq };

struct CompareOptions {
  // Unset: 1.1 x the median final eval loss of the fo-baseline runs for
  // kEvalLoss, 0.01 for kGradNormSq.
  std::optional<double> target;
  TargetMetric metric = TargetMetric::kEvalLoss;
};

struct MethodSummary {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<std::size_t>> steps_to_target;
  std::optional<double> median_steps;  // unset: median run never reached the target
  double median_final = 0.0;
  double median_wallclock_s = 0.0;
};

struct Speedup {
  std::string faster, slower;
  // steps(slower) / steps(faster); unset when either never reached the target.
  std::optional<double> ratio;
};

struct CompareReport {
  double target = 0.0;
  TargetMetric metric = TargetMetric::kEvalLoss;
  std::vector<MethodSummary> methods;
  std::vector<Speedup> speedups;

  const MethodSummary& method(const std::string& label) const {
    for (const auto& m : methods) {
      if (m.label == label) return m;
    }
    throw ConfigError("no runs labelled '" + label + "'");
  }

  std::optional<double> speedup(const std::string& faster, const std::string& slower) const {
    for (const auto& s : speedups) {
      if (s.faster == faster && s.slower == slower) return s.ratio;
    }
    throw ConfigError("no speedup entry for " + faster + " over " + slower);
  }

  std::string text() const;
  std::string csv() const;
};

inline double metric_value(const EvalRow& r, TargetMetric metric) {
  if (metric == TargetMetric::kEvalLoss) return r.eval_loss;
  if (!r.grad_norm_sq) throw ConfigError("run has no gradient-norm column");
  return *r.grad_norm_sq;
}

// First evaluated step whose metric is at or below the target.
inline std::optional<std::size_t> steps_to_target(const RunMetrics& m, double target,
                                                  TargetMetric metric) {
  for (const auto& r : m.rows) {
    if (metric_value(r, metric) <= target) return r.step;
  }
  return std::nullopt;
}

namespace compare_detail {

// Median where unset values count as +infinity.
inline std::optional<double> median(std::vector<std::optional<double>> xs) {
  if (xs.empty()) return std::nullopt;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (const auto& x : xs) v.push_back(x.value_or(inf));
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (std::isinf(med)) return std::nullopt;
  return med;
}

inline std::string opt_str(const std::optional<double>& x) {
  return x ? format_real(*x) : std::string("not reached");
}

}  // namespace compare_detail

// Groups runs by label. The result does not depend on the order of `runs`.
inline CompareReport compare_runs(const std::vector<RunMetrics>& runs,
                                  const CompareOptions& opts = {}) {
  using compare_detail::median;
  std::map<std::string, std::vector<const RunMetrics*>> groups;
  for (const auto& r : runs) {
    if (r.rows.empty()) throw ConfigError("run " + r.label + " has no evaluation rows");
    groups[r.label].push_back(&r);
  }
  for (auto& [label, g] : groups) {
    std::sort(g.begin(), g.end(), [](const RunMetrics* a, const RunMetrics* b) {
      return a->seed < b->seed;
    });
  }

  CompareReport rep;
  rep.metric = opts.metric;
  if (opts.target) {
    rep.target = *opts.target;
  } else if (opts.metric == TargetMetric::kGradNormSq) {
    rep.target = 0.01;
  } else {
    const auto it = groups.find("fo-baseline");
    if (it == groups.end()) {
      throw ConfigError("no target given and no fo-baseline runs to derive one from");
    }
    std::vector<std::optional<double>> finals;
    for (const auto* r : it->second) finals.push_back(r->rows.back().eval_loss);
    rep.target = 1.1 * *median(finals);
  }

  for (const auto& [label, g] : groups) {
    MethodSummary s;
    s.label = label;
    std::vector<std::optional<double>> steps, finals, clocks;
    for (const auto* r : g) {
      s.seeds.push_back(r->seed);
      const auto k = steps_to_target(*r, rep.target, opts.metric);
      s.steps_to_target.push_back(k);
      steps.push_back(k ? std::optional<double>(static_cast<double>(*k)) : std::nullopt);
      finals.push_back(metric_value(r->rows.back(), opts.metric));
      clocks.push_back(r->wallclock_s);
    }
    s.median_steps = median(steps);
    s.median_final = median(finals).value_or(std::numeric_limits<double>::infinity());
    s.median_wallclock_s = median(clocks).value_or(0.0);
    rep.methods.push_back(std::move(s));
  }
  // Fewest steps first; ties go to the earlier wallclock, then the label.
  std::sort(rep.methods.begin(), rep.methods.end(),
            [](const MethodSummary& a, const MethodSummary& b) {
              const double inf = std::numeric_limits<double>::infinity();
              const double sa = a.median_steps.value_or(inf), sb = b.median_steps.value_or(inf);
              if (sa != sb) return sa < sb;
              if (a.median_wallclock_s != b.median_wallclock_s) {
                return a.median_wallclock_s < b.median_wallclock_s;
              }
              return a.label < b.label;
            });
  for (const auto& a : rep.methods) {
    for (const auto& b : rep.methods) {
      if (a.label == b.label) continue;
      Speedup sp{a.label, b.label, std::nullopt};
      if (a.median_steps && b.median_steps && *a.median_steps > 0.0) {
        sp.ratio = *b.median_steps / *a.median_steps;
      }
      rep.speedups.push_back(sp);
    }
  }
  return rep;
}

inline std::string CompareReport::text() const {
  using compare_detail::opt_str;
  std::ostringstream os;
  os << "target " << (metric == TargetMetric::kEvalLoss ? "eval_loss" : "grad_norm_sq")
     << " <= " << format_real(target) << "\n\n";
  os << "steps to target\n";
  for (const auto& m : methods) {
    os << "  " << m.label << ": median " << opt_str(m.median_steps) << " (";
    for (std::size_t i = 0; i < m.seeds.size(); ++i) {
      if (i) os << ", ";
      const auto& k = m.steps_to_target[i];
      os << "seed " << m.seeds[i] << ": "
         << (k ? std::to_string(*k) : std::string("not reached"));
    }
    os << ")\n";
  }
  os << "\nfinal value\n";
  for (const auto& m : methods) {
    os << "  " << m.label << ": median " << format_real(m.median_final) << "\n";
  }
  os << "\nspeedup (steps of slower / steps of faster)\n";
  for (const auto& s : speedups) {
    os << "  " << s.faster << " over " << s.slower << ": " << opt_str(s.ratio) << "\n";
  }
  return os.str();
}

inline std::string CompareReport::csv() const {
  using compare_detail::opt_str;
  std::ostringstream os;
  os << "label,runs,median_steps_to_target,median_final\n";
  for (const auto& m : methods) {
    os << m.label << "," << m.seeds.size() << "," << opt_str(m.median_steps) << ","
       << format_real(m.median_final) << "\n";
  }
  return os.str();
}

// Reads back an experiment directory written by run_experiment. Wallclock
// comes from report.txt when present.
inline std::vector<RunMetrics> load_experiment(const std::filesystem::path& out) {
  const ExperimentConfig cfg = [&] {
    ExperimentConfig c;
    apply_entries(c, read_config_file(out / "config.echo"));
    return c;
  }();
  std::map<std::uint64_t, double> clocks;
  if (std::ifstream rep(out / "report.txt"); rep) {
    std::string line;
    while (std::getline(rep, line)) {
      const auto s = line.find(" seed="), w = line.find(" wallclock_s=");
      if (s == std::string::npos || w == std::string::npos) continue;
      const std::string seed = line.substr(s + 6, line.find(' ', s + 6) - (s + 6));
      clocks[config_detail::to_u64("seed", seed)] = parse_real(line.substr(w + 13));
    }
  }
  std::vector<RunMetrics> runs;
  for (const std::uint64_t seed : cfg.seeds) {
    const auto path = seed_dir(out, seed) / "metrics.csv";
    std::ifstream f(path);
    if (!f) throw IoError("missing '" + path.string() + "'");
    std::string line;
    std::getline(f, line);
    if (line != kMetricsHeader) throw IoError("unexpected header in '" + path.string() + "'");
    RunMetrics m;
    m.label = cfg.label();
    m.seed = seed;
    m.wallclock_s = clocks.count(seed) ? clocks[seed] : 0.0;
    while (std::getline(f, line)) {
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string c;
      while (std::getline(ss, c, ',')) cols.push_back(c);
      while (cols.size() < 5) cols.emplace_back();
      EvalRow r;
      try {
        r.step = config_detail::to_u64("step", cols[0]);
        r.train_loss = parse_real(cols[1]);
        r.eval_loss = parse_real(cols[2]);
        if (!cols[3].empty()) r.eval_accuracy = parse_real(cols[3]);
        if (!cols[4].empty()) r.grad_norm_sq = parse_real(cols[4]);
      } catch (const std::exception& e) {
        throw IoError("malformed row in '" + path.string() + "': " + line);
      }
      m.rows.push_back(r);
    }
    runs.push_back(std::move(m));
  }
  return runs;
}

}  // namespace szo
