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
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "szo/format.hpp"
#include "szo/harness/allocation.hpp"
#include "szo/harness/compare.hpp"
#include "szo/harness/config.hpp"
#include "szo/harness/run.hpp"
#include "szo/masking.hpp"
#include "szo/models/mlp.hpp"
#include "szo/models/quadratic.hpp"
#include "szo/models/shifted.hpp"
#include "szo/models/transformer.hpp"
#include "szo/noise.hpp"
#include "szo/oracle.hpp"
#include "szo/zo.hpp"

namespace szo {

struct VerifyOptions {
  // Smaller sample counts and step budgets; for smoke and mutation tests.
  bool quick = false;
  FaultInjection faults;
  // Check ids to run; empty runs all ten.
  std::vector<int> only;
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::vector<std::pair<std::string, std::string>> details;
  double seconds = 0.0;

  void add(std::string key, std::string value) {
    details.emplace_back(std::move(key), std::move(value));
  }
  void add(std::string key, double value) { add(std::move(key), format_real(value)); }
  void add(std::string key, std::size_t value) {
    add(std::move(key), std::to_string(value));
  }
  std::optional<std::string> detail(const std::string& key) const {
    for (const auto& [k, v] : details) {
      if (k == key) return v;
    }
    return std::nullopt;
  }
};

// Verdict file format, one line per check:
//   check=<id> name=<name> status=PASS|FAIL seconds=<s> <key>=<value> ...
// Values never contain spaces.
inline std::string verdict_line(const CheckResult& r) {
  std::string s = "check=" + std::to_string(r.id) + " name=" + r.name +
                  " status=" + (r.passed ? "PASS" : "FAIL") +
                  " seconds=" + format_real(std::round(r.seconds * 100.0) / 100.0);
  for (const auto& [k, v] : r.details) s += " " + k + "=" + v;
  return s;
}

namespace verify_detail {

inline std::string join_reals(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_real(xs[i]);
  return s;
}

template <typename Fn>
CheckResult timed(int id, std::string name, Fn&& fn) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  const auto start = std::chrono::steady_clock::now();
  fn(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

// The 8-layer equal-width MLP used by several checks: 9 widths of 32.
template <Real T>
MlpTask<T> eight_layer_mlp(std::size_t n_train = 512) {
  return mlp_task<T>(std::vector<std::size_t>(9, 32), Activation::kTanh, n_train, 256, 17);
}

inline std::vector<double> unit_direction(std::size_t d, std::uint64_t seed) {
  std::vector<double> v = NoiseStream(hash_pair(seed, kInitDomain)).gaussian_fill(d);
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace verify_detail

// Empirical mean of the masked estimator against m .* theta on the
// identity quadratic, for dense, magnitude and random masks.
inline CheckResult check_unbiasedness(const VerifyOptions& o) {
  return verify_detail::timed(1, "unbiasedness", [&](CheckResult& r) {
    const std::size_t d = 16;
    const std::size_t n = o.quick ? 20000 : 200000;
    std::vector<double> theta(d);
    for (std::size_t i = 0; i < d; ++i) {
      theta[i] = (i % 2 ? 2.0 : 1.0) * (i % 4 < 2 ? 1.0 : -1.0);
    }
    const QuadraticTask<double> task(d, 1.0, theta);
    const auto& p = task.initial();
    const LossFn<double> loss = bind_loss<double>(task, task.full(Split::kTrain));

    Masker<double> random(p, MaskPolicy::random(0.5));
    SparseMask fixed;
    fixed.per_layer.push_back(random_mask(d, 0.5, NoiseStream(hash_pair(99, kRandomMaskDomain))));
    random.fix_mask(fixed);
    const std::vector<std::pair<std::string, Masker<double>>> maskers{
        {"dense", Masker<double>(p, MaskPolicy::dense())},
        {"magnitude", Masker<double>(p, MaskPolicy::magnitude(0.5))},
        {"random", random},
    };
    r.add("samples", n);
    bool all = true;
    for (std::size_t k = 0; k < maskers.size(); ++k) {
      const auto& [name, masker] = maskers[k];
      const SparseMask m = masker.materialize(p, 0);
      const McMean mc = mc_zo_mean<double>(loss, p, 1e-3, masker, n, 1000 + k, o.faults);
      double max_z = 0.0, max_rel = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double target = m.per_layer[0][i] ? theta[i] : 0.0;
        const double diff = std::abs(mc.mean[i] - target);
        if (mc.standard_error[i] > 0.0) {
          max_z = std::max(max_z, diff / mc.standard_error[i]);
        } else if (diff > 0.0) {
          max_z = std::numeric_limits<double>::infinity();
        }
        if (m.per_layer[0][i]) max_rel = std::max(max_rel, diff / std::abs(theta[i]));
      }
      const bool se_ok = max_z < 4.0;
      const bool rel_ok = max_rel < 0.01;
      all = all && se_ok && rel_ok;
      r.add(name + ".d_hat", m.d_hat());
      r.add(name + ".max_z", max_z);
      r.add(name + ".max_rel_err", max_rel);
      r.add(name + ".within_4se", se_ok ? "yes" : "no");
      r.add(name + ".rel_below_1pct", rel_ok ? "yes" : "no");
    }
    r.passed = all;
  });
}

// Seed-replay steps in place; after every step the parameters must equal the
// pre-step copy minus the committed update.
inline CheckResult check_restore(const VerifyOptions& o) {
  return verify_detail::timed(2, "restore_exactness", [&](CheckResult& r) {
    const auto task = verify_detail::eight_layer_mlp<double>();
    ZoConfig cfg;
    cfg.policy = MaskPolicy::magnitude(0.75);
    cfg.lr = 1e-3;
    cfg.steps = o.quick ? 500 : 10000;
    cfg.mode = EvalMode::kInPlace;
    cfg.base_seed = 5;
    cfg.faults = o.faults;
    ParameterSet<double> p = task.initial();
    ZoStepper<double> stepper(cfg, p);
    double max_dev = 0.0;
    std::size_t aborted = 0;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      const ParameterSet<double> shadow = p;
      const Batch batch = sample_minibatch(task.split_size(Split::kTrain), 16, 5, t);
      ZoStepRecord rec;
      try {
        rec = stepper.step(task, p, batch, t);
      } catch (const NumericError&) {
        ++aborted;
        continue;
      }
      const SparseMask mask = stepper.masker().materialize(shadow, rec.seed);
      const double scale = -(rec.lr * rec.proj_grad);
      for (std::size_t l = 0; l < p.num_layers(); ++l) {
        const NoiseStream z = derive_substream(rec.seed, l);
        const auto& before = shadow.layer(l);
        const auto& after = p.layer(l);
        for (std::size_t i = 0; i < before.size(); ++i) {
          const double want = mask.per_layer[l][i]
                                  ? perturbed_value(before[i], scale, z.gaussian_at(i))
                                  : before[i];
          max_dev = std::max(max_dev, std::abs(after[i] - want));
        }
      }
    }
    r.add("steps", cfg.steps);
    r.add("aborted", aborted);
    r.add("max_deviation", max_dev);
    r.passed = max_dev < 1e-10 && aborted == 0;
  });
}

// Fused in-forward perturbation against the materialized copy + mask path.
inline CheckResult check_dual_path(const VerifyOptions& o) {
  return verify_detail::timed(3, "dual_path", [&](CheckResult& r) {
    const std::size_t steps = o.quick ? 20 : 100;
    const auto mlp = verify_detail::eight_layer_mlp<float>();
    TransformerConfig tc;
    tc.n_train = 256;
    tc.n_eval = 64;
    const TinyTransformerTask<float> transformer(tc);
    bool all = true;
    const auto compare = [&](const Task<float>& task, const std::string& tag,
                             const MaskPolicy& policy) {
      ZoConfig cfg;
      cfg.policy = policy;
      cfg.lr = 1e-3;
      cfg.steps = steps;
      cfg.base_seed = 21;
      cfg.faults = o.faults;
      ParameterSet<float> pf = task.initial(), pm = task.initial();
      cfg.mode = EvalMode::kFused;
      ZoStepper<float> fused(cfg, pf);
      cfg.mode = EvalMode::kMaterialized;
      ZoStepper<float> naive(cfg, pm);
      std::size_t mismatched = 0;
      for (std::size_t t = 0; t < steps; ++t) {
        const Batch b = sample_minibatch(task.split_size(Split::kTrain), 16, 21, t);
        const ZoStepRecord a = fused.step(task, pf, b, t);
        const ZoStepRecord c = naive.step(task, pm, b, t);
        if (!a.same_numerics(c)) ++mismatched;
      }
      const bool same_params = bitwise_equal(pf, pm);
      r.add(tag + ".mismatched_records", mismatched);
      r.add(tag + ".params_identical", same_params ? "yes" : "no");
      all = all && mismatched == 0 && same_params;
    };
    for (const auto& [pname, policy] :
         {std::pair{"magnitude", MaskPolicy::magnitude(0.75)},
          std::pair{"random", MaskPolicy::random(0.75)}}) {
      compare(mlp, std::string("mlp.") + pname, policy);
      compare(transformer, std::string("transformer.") + pname, policy);
    }
    r.add("steps", steps);
    r.passed = all;
  });
}

// Seed-replay stepper against the two-copy reference step.
inline CheckResult check_two_copy(const VerifyOptions& o) {
  return verify_detail::timed(4, "two_copy", [&](CheckResult& r) {
    const std::size_t steps = o.quick ? 20 : 100;
    const auto task = verify_detail::eight_layer_mlp<float>();
    bool all = true;
    for (const auto& [pname, policy] :
         {std::pair{"dense", MaskPolicy::dense()},
          std::pair{"magnitude", MaskPolicy::magnitude(0.75)},
          std::pair{"random", MaskPolicy::random(0.75)}}) {
      ZoConfig cfg;
      cfg.policy = policy;
      cfg.lr = 1e-3;
      cfg.steps = steps;
      cfg.base_seed = 33;
      cfg.faults = o.faults;
      ParameterSet<float> p = task.initial(), q = task.initial();
      ZoStepper<float> stepper(cfg, p);
      std::size_t mismatched = 0;
      for (std::size_t t = 0; t < steps; ++t) {
        const Batch b = sample_minibatch(task.split_size(Split::kTrain), 16, 33, t);
        auto ref = reference_spsa_step<float>(task, b, q, cfg, stepper.masker(), t);
        const ZoStepRecord rec = stepper.step(task, p, b, t);
        if (!rec.same_numerics(ref.record)) ++mismatched;
        q = std::move(ref.params);
      }
      const bool same = bitwise_equal(p, q);
      r.add(std::string(pname) + ".mismatched_records", mismatched);
      r.add(std::string(pname) + ".params_identical", same ? "yes" : "no");
      all = all && mismatched == 0 && same;
    }
    r.add("steps", steps);
    r.passed = all;
  });
}

// ||m .* grad||^2 <= 2 ||E g||^2 + eps^2 L^2 / 2 (d_hat + 4)^3 on random
// points of a d = 64 quadratic. ||E g|| is bounded above by ||g_mc|| plus
// four standard-error norms; that slack is the Monte Carlo margin.
inline CheckResult check_second_moment(const VerifyOptions& o) {
  return verify_detail::timed(5, "second_moment_bound", [&](CheckResult& r) {
    const std::size_t d = 64, draws = o.quick ? 10 : 50;
    const std::size_t n = o.quick ? 2000 : 10000;
    const double eps = 1e-3, cond = 10.0;
    std::size_t violations = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < draws; ++k) {
      const auto theta = NoiseStream(hash_pair(0x6c336bull, k)).gaussian_fill(d);
      const QuadraticTask<double> task(d, cond, theta);
      const auto& p = task.initial();
      const double L = *task.smoothness();
      const Masker<double> masker(p, MaskPolicy::magnitude(0.5));
      const SparseMask m = masker.materialize(p, 0);
      const auto grad = task.gradient(p, task.full(Split::kTrain));
      double lhs = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        if (m.per_layer[0][i]) lhs += grad[i] * grad[i];
      }
      const McMean mc = mc_zo_mean<double>(bind_loss<double>(task, task.full(Split::kTrain)),
                                           p, eps, masker, n, 7000 + k, o.faults);
      double g2 = 0.0, se2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        g2 += mc.mean[i] * mc.mean[i];
        se2 += mc.standard_error[i] * mc.standard_error[i];
      }
      const double g = std::sqrt(g2);
      const double margin = 2.0 * ((g + 4.0 * std::sqrt(se2)) * (g + 4.0 * std::sqrt(se2)) - g2);
      const double dh = static_cast<double>(m.d_hat());
      const double rhs = 2.0 * g2 + eps * eps * L * L / 2.0 * std::pow(dh + 4.0, 3) + margin;
      if (!(lhs <= rhs)) ++violations;
      min_slack = std::min(min_slack, (rhs - lhs) / lhs);
    }
    r.add("draws", draws);
    r.add("samples", n);
    r.add("violations", violations);
    r.add("min_relative_slack", min_slack);
    r.passed = violations == 0;
  });
}

// Steps to ||grad||^2 <= 0.01 on isotropic quadratics with the theory step
// size, against a line through the origin in d.
inline CheckResult check_dimension_scaling(const VerifyOptions& o) {
  return verify_detail::timed(6, "dimension_scaling", [&](CheckResult& r) {
    const std::vector<std::size_t> dims{16, 64, 256};
    const std::size_t seeds = o.quick ? 5 : 15;
    const double sigma_sq = 0.01;
    std::vector<double> medians;
    for (std::size_t d : dims) {
      std::vector<double> steps;
      for (std::size_t s = 0; s < seeds; ++s) {
        const QuadraticTask<double> task(d, 1.0, verify_detail::unit_direction(d, s));
        ZoConfig cfg;
        cfg.policy = MaskPolicy::dense();
        cfg.lr_schedule = LrSchedule::kTheory;
        cfg.smoothness = 1.0;
        cfg.base_seed = 100 + s;
        cfg.steps = 10000 * d;
        cfg.faults = o.faults;
        ParameterSet<double> p = task.initial();
        ZoStepper<double> stepper(cfg, p);
        const Batch b = task.full(Split::kTrain);
        const auto norm_sq = [&] {
          double x = 0.0;
          for (double v : p.layer(0).values()) x += v * v;
          return x;
        };
        std::size_t t = 0;
        while (norm_sq() > sigma_sq && t < cfg.steps) {
          stepper.step(task, p, b, t);
          ++t;
        }
        steps.push_back(static_cast<double>(t));
      }
      std::sort(steps.begin(), steps.end());
      medians.push_back(steps[steps.size() / 2]);
    }
    double sxy = 0.0, sxx = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      const double x = static_cast<double>(dims[i]);
      sxy += x * medians[i];
      sxx += x * x;
      mean += medians[i] / static_cast<double>(dims.size());
    }
    const double slope = sxy / sxx;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      const double fit = slope * static_cast<double>(dims[i]);
      ss_res += (medians[i] - fit) * (medians[i] - fit);
      ss_tot += (medians[i] - mean) * (medians[i] - mean);
    }
    const double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
    r.add("dims", "16,64,256");
    r.add("seeds", seeds);
    r.add("median_steps", verify_detail::join_reals(medians));
    r.add("slope", slope);
    r.add("r_squared", r2);
    r.add("bound_d_over_sigma_sq", verify_detail::join_reals(
                                       {16.0 / sigma_sq, 64.0 / sigma_sq, 256.0 / sigma_sq}));
    r.passed = r2 >= 0.9;
  });
}

// Runs behind the sparse-speedup and mask-ordering checks. Dense MeZO picks
// its fastest learning rate from a grid; every method then runs at that rate
// with the same five run seeds.
struct ShiftedExperiment {
  double target = 0.0;
  double lr = 0.0;
  std::size_t steps = 0;
  std::vector<std::pair<double, std::optional<double>>> dense_grid;  // lr, median steps
  CompareReport report;
  std::string dense, magnitude, random, top;
};

inline ShiftedExperiment run_shifted_experiment(const VerifyOptions& o) {
  ShiftedExperiment x;
  const auto pair = shifted_pair<float>(ShiftSpec{}, 1.0, 0);
  const Task<float>& task = *pair.task_b;
  x.steps = o.quick ? 1500 : 5000;
  const std::vector<std::uint64_t> seeds =
      o.quick ? std::vector<std::uint64_t>{0, 1, 2} : std::vector<std::uint64_t>{0, 1, 2, 3, 4};

  ExperimentConfig base;
  base.steps = x.steps;
  base.eval_every = 20;
  base.batch = 16;
  base.seeds = seeds;
  base.sparsity = 0.75;
  base.faults = o.faults;

  std::vector<ExperimentConfig> jobs;
  ExperimentConfig fo = base;
  fo.optimizer = Optimizer::kFoBaseline;
  fo.lr_schedule = LrSchedule::kTheory;
  fo.steps = 10000;
  fo.eval_every = 1000;
  fo.seeds = {0};
  const RunMetrics fo_run = run_single<float>(fo, task, 0);
  x.target = 1.1 * fo_run.rows.back().eval_loss;

  const std::vector<double> grid =
      o.quick ? std::vector<double>{1e-2, 2e-2} : std::vector<double>{2e-3, 5e-3, 1e-2, 2e-2, 5e-2};
  const auto run_all = [&](const ExperimentConfig& cfg) {
    std::vector<RunMetrics> runs(cfg.seeds.size());
    run_parallel(cfg.seeds.size(), worker_slots(), [&](std::size_t i) {
      runs[i] = run_single<float>(cfg, task, cfg.seeds[i]);
    });
    return runs;
  };
  CompareOptions opts;
  opts.target = x.target;
  std::vector<RunMetrics> dense_best;
  std::optional<double> best_steps;
  for (double lr : grid) {
    ExperimentConfig cfg = base;
    cfg.optimizer = Optimizer::kMezo;
    cfg.lr = lr;
    auto runs = run_all(cfg);
    const auto rep = compare_runs(runs, opts);
    const auto med = rep.methods.front().median_steps;
    x.dense_grid.emplace_back(lr, med);
    if (med && (!best_steps || *med < *best_steps)) {
      best_steps = med;
      x.lr = lr;
      dense_best = std::move(runs);
    }
  }
  if (!best_steps) {
    x.lr = grid.front();
    ExperimentConfig cfg = base;
    cfg.optimizer = Optimizer::kMezo;
    cfg.lr = x.lr;
    dense_best = run_all(cfg);
  }

  std::vector<RunMetrics> all = dense_best;
  const auto add = [&](ExperimentConfig cfg) {
    cfg.lr = x.lr;
    auto runs = run_all(cfg);
    const std::string label = runs.front().label;
    std::move(runs.begin(), runs.end(), std::back_inserter(all));
    return label;
  };
  ExperimentConfig mag = base;
  mag.optimizer = Optimizer::kSmezo;
  ExperimentConfig rnd = base;
  rnd.optimizer = Optimizer::kRmezo;
  ExperimentConfig top = mag;
  top.select_large = true;
  x.dense = dense_best.front().label;
  x.magnitude = add(mag);
  x.random = add(rnd);
  x.top = add(top);
  x.report = compare_runs(all, opts);
  return x;
}

inline CheckResult check_sparse_speedup(const ShiftedExperiment& x, double seconds) {
  CheckResult r;
  r.id = 7;
  r.name = "sparse_speedup";
  r.seconds = seconds;
  const auto& d = x.report.method(x.dense);
  const auto& m = x.report.method(x.magnitude);
  const auto str = [](const std::optional<double>& v) {
    return v ? format_real(*v) : std::string("not_reached");
  };
  r.add("target", x.target);
  r.add("lr", x.lr);
  std::string grid;
  for (const auto& [lr, s] : x.dense_grid) grid += (grid.empty() ? "" : ",") + format_real(lr) + ":" + str(s);
  r.add("dense_grid", grid);
  r.add("smezo_median_steps", str(m.median_steps));
  r.add("mezo_median_steps", str(d.median_steps));
  r.add("speedup", str(x.report.speedup(x.magnitude, x.dense)));
  r.passed = m.median_steps &&
             (!d.median_steps || *m.median_steps < *d.median_steps);
  return r;
}

inline CheckResult check_mask_ordering(const ShiftedExperiment& x, double seconds) {
  CheckResult r;
  r.id = 8;
  r.name = "mask_ordering";
  r.seconds = seconds;
  const double fm = x.report.method(x.magnitude).median_final;
  const double fr = x.report.method(x.random).median_final;
  const double fd = x.report.method(x.dense).median_final;
  const double ft = x.report.method(x.top).median_final;
  r.add("lr", x.lr);
  r.add("final_magnitude", fm);
  r.add("final_random", fr);
  r.add("final_dense", fd);
  r.add("final_top25", ft);
  r.add("final_bottom25", fm);
  r.passed = fm <= fr && fr <= fd && ft > fm;
  return r;
}

inline CheckResult check_memory(const VerifyOptions&) {
  return verify_detail::timed(9, "memory_ratio", [&](CheckResult& r) {
    const auto task = verify_detail::eight_layer_mlp<float>(64);
    ExperimentConfig cfg;
    cfg.optimizer = Optimizer::kSmezo;
    cfg.lr = 1e-3;
    const AllocationReport a = measure_allocation<float>(task, cfg, 3);
    r.add("fused_peak_bytes", a.fused_peak);
    r.add("naive_peak_bytes", a.naive_peak);
    r.add("ratio", a.ratio);
    r.add("max_layer_bytes", a.max_layer_bytes);
    r.add("total_param_bytes", a.total_param_bytes);
    r.passed = a.ratio <= 0.2 && a.fused_peak <= 2 * a.max_layer_bytes &&
               a.naive_peak >= a.total_param_bytes;
  });
}

// Unique scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::size_t counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("szo-" + tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline CheckResult check_determinism(const VerifyOptions&) {
  return verify_detail::timed(10, "determinism", [&](CheckResult& r) {
    ExperimentConfig cfg;
    apply_entries(cfg, {{"task", "mlp"},
                        {"task.widths", "8,16,16,4"},
                        {"task.n_train", "200"},
                        {"task.n_eval", "100"},
                        {"optimizer", "smezo"},
                        {"lr", "0.001"},
                        {"steps", "300"},
                        {"eval_every", "50"},
                        {"seeds", "5,6"}});
    const auto root = scratch_dir("determinism");
    cfg.out = root / "a";
    run_experiment(cfg);
    cfg.out = root / "b";
    run_experiment(cfg);
    bool same = true;
    std::size_t bytes = 0;
    for (std::uint64_t seed : cfg.seeds) {
      for (const char* f : {"metrics.csv", "steps.csv"}) {
        const std::string a = slurp(seed_dir(root / "a", seed) / f);
        const std::string b = slurp(seed_dir(root / "b", seed) / f);
        same = same && !a.empty() && a == b;
        bytes += a.size();
      }
    }
    std::filesystem::remove_all(root);
    r.add("files_compared", cfg.seeds.size() * 2);
    r.add("bytes", bytes);
    r.passed = same;
  });
}

inline std::vector<CheckResult> verify_suite(const VerifyOptions& o = {}) {
  const auto want = [&](int id) {
    return o.only.empty() || std::find(o.only.begin(), o.only.end(), id) != o.only.end();
  };
  std::vector<CheckResult> out;
  if (want(1)) out.push_back(check_unbiasedness(o));
  if (want(2)) out.push_back(check_restore(o));
  if (want(3)) out.push_back(check_dual_path(o));
  if (want(4)) out.push_back(check_two_copy(o));
  if (want(5)) out.push_back(check_second_moment(o));
  if (want(6)) out.push_back(check_dimension_scaling(o));
  if (want(7) || want(8)) {
    const auto start = std::chrono::steady_clock::now();
    const ShiftedExperiment x = run_shifted_experiment(o);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (want(7)) out.push_back(check_sparse_speedup(x, s));
    if (want(8)) out.push_back(check_mask_ordering(x, s));
  }
  if (want(9)) out.push_back(check_memory(o));
  if (want(10)) out.push_back(check_determinism(o));
  return out;
}

}  // namespace szo
