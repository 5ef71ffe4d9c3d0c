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

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "szo/error.hpp"
#include "szo/format.hpp"
#include "szo/harness/config.hpp"
#include "szo/masking.hpp"
#include "szo/models/logistic.hpp"
#include "szo/models/mlp.hpp"
#include "szo/models/quadratic.hpp"
#include "szo/models/shifted.hpp"
#include "szo/models/transformer.hpp"
#include "szo/oracle.hpp"
#include "szo/scratch.hpp"
#include "szo/zo.hpp"

namespace szo {

template <Real T>
std::shared_ptr<const Task<T>> make_task(const TaskSpec& s) {
  if (s.kind == "quadratic") {
    return std::make_shared<QuadraticTask<T>>(s.dim, s.condition);
  }
  if (s.kind == "logistic") {
    LinearTeacher teacher;
    teacher.weights = NoiseStream(hash_pair(s.seed, 0x74656163ull)).gaussian_fill(s.dim);
    teacher.flip_prob = 0.02;
    return std::make_shared<LogisticTask<T>>(
        teacher.sample(s.n_train, hash_pair(s.seed, 1)),
        teacher.sample(s.n_eval, hash_pair(s.seed, 2)),
        "logistic dim=" + std::to_string(s.dim) + " train=" + std::to_string(s.n_train) +
            " eval=" + std::to_string(s.n_eval) + " seed=" + std::to_string(s.seed));
  }
  if (s.kind == "mlp") {
    return std::make_shared<MlpTask<T>>(
        mlp_task<T>(s.widths, parse_activation(s.activation), s.n_train, s.n_eval, s.seed));
  }
  if (s.kind == "transformer") {
    TransformerConfig c;
    c.d_model = s.d_model;
    c.n_heads = s.heads;
    c.seq_len = s.seq_len;
    c.vocab = s.vocab;
    c.n_train = s.n_train;
    c.n_eval = s.n_eval;
    c.seed = s.seed;
    return std::make_shared<TinyTransformerTask<T>>(c);
  }
  if (s.kind == "shifted") {
    ShiftSpec spec;
    spec.dim = s.dim;
    return shifted_pair<T>(spec, s.shift, s.seed).task_b;
  }
  throw ConfigError("unknown task '" + s.kind + "'");
}

struct EvalRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  std::optional<double> eval_accuracy;
  // Squared norm of the full training gradient, when the task has one.
  std::optional<double> grad_norm_sq;
};

struct RunMetrics {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;
  std::vector<ZoStepRecord> records;
  // Unset when the run was not instrumented (first-order baseline).
  std::optional<std::size_t> peak_aux_bytes;
  double wallclock_s = 0.0;
  std::size_t aborted_steps = 0;
  bool failed = false;
  std::string failure;
};

// metrics.csv: step,train_loss,eval_loss,eval_accuracy,grad_norm_sq
//   one row per evaluation, starting at step 0; absent values are empty.
// steps.csv: step,seed,loss_plus,loss_minus,proj_grad,d_hat,lr,wallclock_us
//   one row per completed ZO step; seed is the derived step seed.
inline constexpr const char* kMetricsHeader =
    "step,train_loss,eval_loss,eval_accuracy,grad_norm_sq";
inline constexpr const char* kStepsHeader =
    "step,seed,loss_plus,loss_minus,proj_grad,d_hat,lr,wallclock_us";

inline std::string metrics_line(const EvalRow& r) {
  std::string s = std::to_string(r.step) + "," + format_real(r.train_loss) + "," +
                  format_real(r.eval_loss) + ",";
  if (r.eval_accuracy) s += format_real(*r.eval_accuracy);
  s += ",";
  if (r.grad_norm_sq) s += format_real(*r.grad_norm_sq);
  return s;
}

inline std::string steps_line(const ZoStepRecord& r) {
  return std::to_string(r.step) + "," + std::to_string(r.seed) + "," +
         format_real(r.loss_plus) + "," + format_real(r.loss_minus) + "," +
         format_real(r.proj_grad) + "," + std::to_string(r.d_hat) + "," +
         format_real(r.lr) + "," + std::to_string(r.wallclock_us);
}

namespace run_detail {

class CsvSink {
 public:
  CsvSink() = default;
  CsvSink(const std::filesystem::path& path, const char* header) : f_(path, std::ios::trunc) {
    if (!f_) throw IoError("cannot open '" + path.string() + "' for writing");
    f_ << header << '\n';
    f_.flush();
  }
  void write(const std::string& line) {
    if (!f_.is_open()) return;
    f_ << line << '\n';
    f_.flush();
  }

 private:
  std::ofstream f_;
};

template <Real T>
EvalRow evaluate_row(const Task<T>& task, const ParameterSet<T>& p, std::size_t step) {
  EvalRow r;
  r.step = step;
  const Batch train = task.full(Split::kTrain);
  const Batch eval = task.full(Split::kEval);
  r.train_loss = task.evaluate(p, train);
  r.eval_loss = task.evaluate(p, eval);
  r.eval_accuracy = task.evaluate_accuracy(p, eval);
  if (task.has_gradient()) {
    double s = 0.0;
    for (double g : task.gradient(p, train)) s += g * g;
    r.grad_norm_sq = s;
  }
  return r;
}

inline bool is_eval_step(std::size_t t, std::size_t steps, std::size_t every) {
  return t % every == 0 || t == steps;
}

}  // namespace run_detail

// One run of cfg on `task` with run seed `seed`. When `dir` is non-empty the
// CSV files are written there row by row.
template <Real T>
RunMetrics run_single(const ExperimentConfig& cfg, const Task<T>& task, std::uint64_t seed,
                      const std::filesystem::path& dir = {}) {
  using run_detail::evaluate_row;
  using run_detail::is_eval_step;
  RunMetrics m;
  m.label = cfg.label();
  m.seed = seed;
  const auto start = std::chrono::steady_clock::now();

  run_detail::CsvSink metrics, steps;
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    metrics = run_detail::CsvSink(dir / "metrics.csv", kMetricsHeader);
    steps = run_detail::CsvSink(dir / "steps.csv", kStepsHeader);
  }
  const auto record_row = [&](const EvalRow& r) {
    m.rows.push_back(r);
    metrics.write(metrics_line(r));
  };

  ParameterSet<T> p = task.initial();
  record_row(evaluate_row(task, p, 0));

  if (cfg.optimizer == Optimizer::kFoBaseline) {
    double lr = cfg.lr;
    if (cfg.lr_schedule == LrSchedule::kTheory) {
      const auto L = task.smoothness();
      if (!L) throw ConfigError(task.name() + " has no smoothness constant");
      lr = 1.0 / *L;
    }
    const Batch train = task.full(Split::kTrain);
    const double initial = m.rows.front().train_loss;
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
      std::vector<double> g;
      if (task.has_gradient()) {
        g = task.gradient(p, train);
      } else if constexpr (std::same_as<T, double>) {
        g = fd_gradient<T>(bind_loss(task, train), p);
      } else {
        throw ConfigError("fo-baseline on " + task.name() + " needs dtype f64");
      }
      try {
        axpy_into(p, -lr, g);
      } catch (const NumericError& e) {
        m.failed = true;
        m.failure = e.what();
        break;
      }
      if (is_eval_step(t, cfg.steps, cfg.eval_every)) {
        const EvalRow r = evaluate_row(task, p, t);
        record_row(r);
        if (!std::isfinite(r.train_loss) || r.train_loss > 10.0 * initial) {
          m.failed = true;
          m.failure = "first-order baseline diverged at step " + std::to_string(t);
          break;
        }
      }
    }
  } else if (cfg.steps > 0) {
    AllocationLedger ledger;
    ZoConfig zc = cfg.zo_config(seed);
    if (zc.lr_schedule == LrSchedule::kTheory) {
      const auto L = task.smoothness();
      if (!L) throw ConfigError(task.name() + " has no smoothness constant");
      zc.smoothness = *L;
    }
    ZoStepper<T> stepper(zc, p, &ledger);
    if (!cfg.thresholds.empty()) {
      stepper.masker().set_thresholds(read_thresholds(cfg.thresholds), p);
    }
    const std::size_t n_train = task.split_size(Split::kTrain);
    const std::size_t abort_limit = cfg.steps / 20;
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      const Batch batch = sample_minibatch(n_train, cfg.batch, seed, t);
      try {
        const ZoStepRecord rec = stepper.step(task, p, batch, t);
        m.records.push_back(rec);
        steps.write(steps_line(rec));
      } catch (const NumericError& e) {
        if (++m.aborted_steps > abort_limit) {
          m.failed = true;
          m.failure = std::to_string(m.aborted_steps) + " aborted steps (limit " +
                      std::to_string(abort_limit) + "); last: " + e.what();
          break;
        }
      }
      if (is_eval_step(t + 1, cfg.steps, cfg.eval_every)) {
        record_row(evaluate_row(task, p, t + 1));
      }
    }
    m.peak_aux_bytes = ledger.peak();
  }
  m.wallclock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

// Worker slots for independent runs, from SZO_WORKERS (default 1).
inline std::size_t worker_slots() {
  const char* v = std::getenv("SZO_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("SZO_WORKERS must be a positive integer");
  return static_cast<std::size_t>(n);
}

// Runs fn(i) for i in [0, n) on up to `slots` threads; the first exception
// is rethrown after all workers stop.
template <typename Fn>
void run_parallel(std::size_t n, std::size_t slots, Fn&& fn) {
  slots = std::max<std::size_t>(1, std::min(slots, n));
  if (slots == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < slots; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::filesystem::path seed_dir(const std::filesystem::path& out, std::uint64_t seed) {
  return out / ("seed_" + std::to_string(seed));
}

inline std::string run_summary(const RunMetrics& m) {
  std::string s = "run label=" + m.label + " seed=" + std::to_string(m.seed);
  if (!m.rows.empty()) {
    s += " final_step=" + std::to_string(m.rows.back().step) +
         " train_loss=" + format_real(m.rows.back().train_loss) +
         " eval_loss=" + format_real(m.rows.back().eval_loss);
    if (m.rows.back().eval_accuracy) {
      s += " eval_accuracy=" + format_real(*m.rows.back().eval_accuracy);
    }
  }
  s += " aborted=" + std::to_string(m.aborted_steps);
  s += " peak_aux_bytes=" + (m.peak_aux_bytes ? std::to_string(*m.peak_aux_bytes) : "n/a");
  s += " status=" + std::string(m.failed ? "failed" : "ok");
  if (m.failed) s += " reason=\"" + m.failure + "\"";
  return s;
}

// Writes config.echo and report.txt under cfg.out and one seed_<s>/
// directory per run seed. Runs are returned in the order of cfg.seeds.
inline std::vector<RunMetrics> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  {
    std::ofstream echo(cfg.out / "config.echo", std::ios::trunc);
    if (!echo) throw IoError("cannot write to '" + cfg.out.string() + "'");
    echo << echo_config(cfg);
  }
  std::vector<RunMetrics> runs(cfg.seeds.size());
  std::string description;
  const auto go = [&]<Real T>() {
    const auto task = make_task<T>(cfg.task);
    description = task->describe();
    run_parallel(cfg.seeds.size(), worker_slots(), [&](std::size_t i) {
      runs[i] = run_single<T>(cfg, *task, cfg.seeds[i], seed_dir(cfg.out, cfg.seeds[i]));
    });
  };
  if (cfg.dtype == "f64") {
    go.template operator()<double>();
  } else {
    go.template operator()<float>();
  }
  std::ofstream report(cfg.out / "report.txt", std::ios::trunc);
  report << "task " << description << "\n";
  for (const auto& m : runs) {
    report << run_summary(m) << " wallclock_s=" << format_real(m.wallclock_s) << "\n";
  }
  return runs;
}

}  // namespace szo
